//! Elicitation sessions: a growing set of fixed concordance values with the
//! feasibility verdict and the bounds of every remaining label kept current.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use concordance_core::attainability::{check_attainable_with, Limits, PartialSignature, EQ_TOL};
use concordance_core::subset::{even_power_set, pair_labels};
use concordance_core::{tau_kappa_convert, Error as CoreError, Scale, SubsetIndex};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::error::{Error, Rejection, Result};
use crate::fraction::de_number;
use crate::parallel::bound_targets;
use crate::schema::{BoundsDoc, CertificateDoc, ScaleDoc};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    #[default]
    Elicited,
    Estimated,
}

/// Which labels get bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetMode {
    All,
    Pairs,
}

impl TargetMode {
    pub fn default_for(d: usize) -> Self {
        if d <= 6 {
            TargetMode::All
        } else {
            TargetMode::Pairs
        }
    }
}

/// A fixed concordance probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub label: Vec<usize>,
    pub value: f64,
    pub provenance: Provenance,
}

/// A constraint as submitted, possibly on the `τ` scale.
#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct ConstraintInput {
    pub label: Vec<usize>,
    #[serde(deserialize_with = "de_number")]
    pub value: f64,
    #[serde(default)]
    pub scale: ScaleDoc,
    #[serde(default)]
    pub provenance: Provenance,
}

impl ConstraintInput {
    fn resolve(&self, d: usize) -> Result<(SubsetIndex, Constraint)> {
        let s = SubsetIndex::new(d, &self.label)?;
        if s.is_empty() || s.len() % 2 == 1 {
            return Err(CoreError::InvalidSubset(format!("{s} is not a nonempty even subset")).into());
        }
        let value = match self.scale {
            ScaleDoc::Kappa => self.value,
            ScaleDoc::Tau => tau_kappa_convert(self.value, s.len(), Scale::Kappa)?,
        };
        if !(0.0..=1.0).contains(&value) {
            return Err(CoreError::InvalidSignature(format!("value {value} for {s} outside [0, 1]")).into());
        }
        Ok((s, Constraint { label: s.members(), value, provenance: self.provenance }))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: Uuid,
    pub d: usize,
    pub targets: TargetMode,
    /// Sorted by label in canonical order.
    pub constraints: Vec<Constraint>,
    pub created_ms: u64,
    pub updated_ms: u64,
    pub revision: u64,
    pub certificate: CertificateDoc,
    /// `None` once every target label is fixed.
    pub bounds: Option<BoundsDoc>,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

fn subset_of(d: usize, c: &Constraint) -> SubsetIndex {
    SubsetIndex::new(d, &c.label).expect("stored constraints are valid")
}

fn partial_of(d: usize, constraints: &[Constraint]) -> Result<PartialSignature> {
    let entries: Vec<(SubsetIndex, f64)> = constraints.iter().map(|c| (subset_of(d, c), c.value)).collect();
    Ok(PartialSignature::from_entries(d, &entries)?)
}

fn candidate_targets(d: usize, mode: TargetMode) -> Vec<SubsetIndex> {
    let all = match mode {
        TargetMode::All => even_power_set(d),
        TargetMode::Pairs => pair_labels(d),
    };
    all.into_iter().filter(|s| !s.is_empty()).collect()
}

/// Feasibility and bounds for a constraint set.
fn evaluate(
    d: usize,
    mode: TargetMode,
    constraints: &[Constraint],
    limits: &Limits,
) -> Result<(CertificateDoc, Option<BoundsDoc>)> {
    let partial = partial_of(d, constraints)?;
    let cert = check_attainable_with(&partial, limits)?;
    if !cert.feasible {
        return Err(CoreError::Infeasible { phase_one_objective: cert.phase_one_objective }.into());
    }
    let targets: Vec<SubsetIndex> =
        candidate_targets(d, mode).into_iter().filter(|t| !partial.labels().contains(t)).collect();
    let bounds = if targets.is_empty() {
        None
    } else {
        Some(BoundsDoc::from_report(&bound_targets(&partial, &targets, limits)?))
    };
    Ok((CertificateDoc::from(&cert), bounds))
}

impl Session {
    pub fn create(d: usize, mode: Option<TargetMode>, inputs: &[ConstraintInput], limits: &Limits) -> Result<Self> {
        if d < 2 || d > limits.dim_cap {
            return Err(CoreError::DimensionTooLarge { d, max: limits.dim_cap }.into());
        }
        let mode = mode.unwrap_or(TargetMode::default_for(d));
        let mut resolved: Vec<(SubsetIndex, Constraint)> =
            inputs.iter().map(|c| c.resolve(d)).collect::<Result<_>>()?;
        resolved.sort_by(|a, b| a.0.cmp(&b.0));
        if resolved.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Invalid("duplicate constraint labels".into()));
        }
        let constraints: Vec<Constraint> = resolved.into_iter().map(|r| r.1).collect();
        let (certificate, bounds) = evaluate(d, mode, &constraints, limits)?;
        let t = now_ms();
        Ok(Session {
            id: Uuid::new_v4(),
            d,
            targets: mode,
            constraints,
            created_ms: t,
            updated_ms: t,
            revision: 0,
            certificate,
            bounds,
        })
    }

    pub fn partial(&self) -> Result<PartialSignature> {
        partial_of(self.d, &self.constraints)
    }

    /// Attainable interval of `label` given every other constraint.
    pub fn interval(&self, label: &SubsetIndex, limits: &Limits) -> Result<(f64, f64)> {
        if let Some(b) = &self.bounds {
            let members = label.members();
            if let Some(i) = b.targets.iter().position(|t| *t == members) {
                return Ok((b.lower[i], b.upper[i]));
            }
        }
        let others: Vec<Constraint> =
            self.constraints.iter().filter(|c| subset_of(self.d, c) != *label).cloned().collect();
        let partial = partial_of(self.d, &others)?;
        let r = bound_targets(&partial, std::slice::from_ref(label), limits)?;
        Ok((r.lower[0], r.upper[0]))
    }

    /// The session with one more (or one replaced) constraint. Values
    /// outside the attainable interval are rejected.
    pub fn with_constraint(&self, input: &ConstraintInput, limits: &Limits) -> Result<Session> {
        let (s, c) = input.resolve(self.d)?;
        if self.constraints.contains(&c) {
            return Ok(self.clone());
        }
        let (lower, upper) = self.interval(&s, limits)?;
        if c.value < lower - EQ_TOL || c.value > upper + EQ_TOL {
            return Err(Error::Rejected(Rejection { label: c.label, value: c.value, lower, upper }));
        }
        let mut constraints: Vec<Constraint> =
            self.constraints.iter().filter(|x| subset_of(self.d, x) != s).cloned().collect();
        constraints.push(c);
        constraints.sort_by_key(|x| subset_of(self.d, x));
        self.rebuilt(constraints, limits)
    }

    pub fn without_constraint(&self, label: &[usize], limits: &Limits) -> Result<Session> {
        let s = SubsetIndex::new(self.d, label)?;
        let before = self.constraints.len();
        let constraints: Vec<Constraint> =
            self.constraints.iter().filter(|x| subset_of(self.d, x) != s).cloned().collect();
        if constraints.len() == before {
            return Err(Error::Invalid(format!("no constraint on {s}")));
        }
        self.rebuilt(constraints, limits)
    }

    fn rebuilt(&self, constraints: Vec<Constraint>, limits: &Limits) -> Result<Session> {
        let (certificate, bounds) = evaluate(self.d, self.targets, &constraints, limits)?;
        Ok(Session {
            constraints,
            certificate,
            bounds,
            updated_ms: now_ms().max(self.updated_ms),
            revision: self.revision + 1,
            ..self.clone()
        })
    }
}

struct Slot {
    write: Mutex<()>,
    current: RwLock<Arc<Session>>,
}

/// Sessions in memory, mirrored to one JSON file each when a directory is
/// configured.
pub struct SessionStore {
    dir: Option<PathBuf>,
    limits: Limits,
    slots: RwLock<HashMap<Uuid, Arc<Slot>>>,
}

impl SessionStore {
    pub fn in_memory(limits: Limits) -> Self {
        Self { dir: None, limits, slots: RwLock::new(HashMap::new()) }
    }

    /// Opens (creating if needed) a directory and loads every session in it.
    pub fn open(dir: &Path, limits: Limits) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let mut slots = HashMap::new();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let session: Session = serde_json::from_slice(&fs::read(&path)?)?;
            slots.insert(session.id, Arc::new(Slot { write: Mutex::new(()), current: RwLock::new(Arc::new(session)) }));
        }
        Ok(Self { dir: Some(dir.to_path_buf()), limits, slots: RwLock::new(slots) })
    }

    pub fn limits(&self) -> &Limits {
        &self.limits
    }

    fn persist(&self, s: &Session) -> Result<()> {
        if let Some(dir) = &self.dir {
            let tmp = dir.join(format!(".{}.json.tmp", s.id));
            fs::write(&tmp, serde_json::to_vec_pretty(s)?)?;
            fs::rename(&tmp, dir.join(format!("{}.json", s.id)))?;
        }
        Ok(())
    }

    fn slot(&self, id: Uuid) -> Result<Arc<Slot>> {
        self.slots.read().unwrap().get(&id).cloned().ok_or_else(|| Error::UnknownSession(id.to_string()))
    }

    pub fn create(&self, d: usize, mode: Option<TargetMode>, inputs: &[ConstraintInput]) -> Result<Arc<Session>> {
        let s = Arc::new(Session::create(d, mode, inputs, &self.limits)?);
        self.persist(&s)?;
        let slot = Slot { write: Mutex::new(()), current: RwLock::new(s.clone()) };
        self.slots.write().unwrap().insert(s.id, Arc::new(slot));
        Ok(s)
    }

    pub fn get(&self, id: Uuid) -> Result<Arc<Session>> {
        Ok(self.slot(id)?.current.read().unwrap().clone())
    }

    pub fn list(&self) -> Vec<Uuid> {
        let mut ids: Vec<Uuid> = self.slots.read().unwrap().keys().copied().collect();
        ids.sort();
        ids
    }

    /// Applies `f` to the current state under the session's write lock; the
    /// state is replaced only when `f` succeeds.
    pub fn update<F>(&self, id: Uuid, f: F) -> Result<Arc<Session>>
    where
        F: FnOnce(&Session, &Limits) -> Result<Session>,
    {
        let slot = self.slot(id)?;
        let _guard = slot.write.lock().unwrap();
        let current = slot.current.read().unwrap().clone();
        let next = f(&current, &self.limits)?;
        if next == *current {
            return Ok(current);
        }
        let next = Arc::new(next);
        self.persist(&next)?;
        *slot.current.write().unwrap() = next.clone();
        Ok(next)
    }

    pub fn add_constraint(&self, id: Uuid, input: &ConstraintInput) -> Result<Arc<Session>> {
        self.update(id, |s, limits| s.with_constraint(input, limits))
    }

    pub fn remove_constraint(&self, id: Uuid, label: &[usize]) -> Result<Arc<Session>> {
        self.update(id, |s, limits| s.without_constraint(label, limits))
    }

    pub fn delete(&self, id: Uuid) -> Result<()> {
        let slot = self.slots.write().unwrap().remove(&id).ok_or_else(|| Error::UnknownSession(id.to_string()))?;
        let _guard = slot.write.lock().unwrap();
        if let Some(dir) = &self.dir {
            let path = dir.join(format!("{id}.json"));
            if path.exists() {
                fs::remove_file(path)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(i: usize, j: usize, value: f64) -> ConstraintInput {
        ConstraintInput { label: vec![i, j], value, scale: ScaleDoc::Kappa, provenance: Provenance::Estimated }
    }

    fn crypto_pairs() -> Vec<ConstraintInput> {
        vec![pair(1, 2, 0.639), pair(1, 3, 0.666), pair(2, 3, 0.681)]
    }

    fn bound_of(s: &Session, label: &[usize]) -> (f64, f64) {
        let b = s.bounds.as_ref().unwrap();
        let i = b.targets.iter().position(|t| t == label).unwrap();
        (b.lower[i], b.upper[i])
    }

    #[test]
    fn empty_session_has_full_ranges() {
        let s = Session::create(3, None, &[], &Limits::default()).unwrap();
        assert!(s.certificate.feasible);
        let b = s.bounds.unwrap();
        assert_eq!(b.targets, vec![vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert!(b.lower.iter().all(|&x| x.abs() < 1e-9));
        assert!(b.upper.iter().all(|&x| (x - 1.0).abs() < 1e-9));
    }

    #[test]
    fn constraints_shrink_bounds_and_restore() {
        let limits = Limits::default();
        let s = Session::create(4, None, &crypto_pairs(), &limits).unwrap();
        let t = s.with_constraint(&pair(1, 4, 0.598), &limits).unwrap();
        for label in [[2, 4], [3, 4]] {
            let (lo0, hi0) = bound_of(&s, &label);
            let (lo1, hi1) = bound_of(&t, &label);
            assert!(lo1 >= lo0 - 1e-9 && hi1 <= hi0 + 1e-9);
            assert!(hi1 - lo1 < hi0 - lo0 - 1e-3);
        }
        // the estimated values lie inside the section
        let (lo, hi) = bound_of(&t, &[2, 4]);
        assert!(lo <= 0.630 && 0.630 <= hi);
        let (lo, hi) = bound_of(&t, &[3, 4]);
        assert!(lo <= 0.661 && 0.661 <= hi);
        assert_eq!(t.with_constraint(&pair(1, 4, 0.598), &limits).unwrap(), t);
        let back = t.without_constraint(&[1, 4], &limits).unwrap();
        assert_eq!(back.bounds, s.bounds);
        assert_eq!(back.revision, 2);
    }

    #[test]
    fn outside_value_is_rejected_with_interval() {
        let limits = Limits::default();
        let s = Session::create(3, None, &[pair(1, 2, 0.25), pair(1, 3, 0.25)], &limits).unwrap();
        // κ12 + κ13 + κ23 ≥ 1 for three variables
        let (lo, _) = bound_of(&s, &[2, 3]);
        assert!((lo - 0.5).abs() < 1e-9);
        match s.with_constraint(&pair(2, 3, 0.3), &limits) {
            Err(Error::Rejected(r)) => {
                assert_eq!(r.label, vec![2, 3]);
                assert!((r.lower - 0.5).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
        let tau = ConstraintInput { scale: ScaleDoc::Tau, ..pair(2, 3, 0.0) };
        assert!(s.with_constraint(&tau, &limits).is_ok());
    }

    #[test]
    fn infeasible_creation_and_bad_labels() {
        let limits = Limits::default();
        let p = 7.0 / 24.0;
        let e = Session::create(3, None, &[pair(1, 2, p), pair(1, 3, p), pair(2, 3, p)], &limits);
        assert!(matches!(e, Err(Error::Core(CoreError::Infeasible { .. }))));
        let odd = ConstraintInput { label: vec![1, 2, 3], ..pair(1, 2, 0.5) };
        assert!(Session::create(3, None, &[odd], &limits).is_err());
        assert!(Session::create(3, None, &[pair(1, 2, 0.5), pair(1, 2, 0.6)], &limits).is_err());
    }

    #[test]
    fn store_persists_atomically() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::open(dir.path(), Limits::default()).unwrap();
        let s = store.create(4, None, &crypto_pairs()).unwrap();
        let rejected = store.add_constraint(s.id, &pair(1, 2, 0.99));
        assert!(rejected.is_err());
        assert_eq!(*store.get(s.id).unwrap(), *s);
        let t = store.add_constraint(s.id, &pair(1, 4, 0.598)).unwrap();
        let reopened = SessionStore::open(dir.path(), Limits::default()).unwrap();
        assert_eq!(*reopened.get(s.id).unwrap(), *t);
        let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 1);
        reopened.delete(s.id).unwrap();
        assert!(matches!(reopened.get(s.id), Err(Error::UnknownSession(_))));
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}
