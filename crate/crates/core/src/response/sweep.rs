//! Quasi-static parameter sweeps of modal springs with zero-crossing
//! detection. Modes are followed across sweep points by eigenvector
//! similarity, so labels stay attached to the same physical mode.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::first_dm;
use crate::modal::{ModeKind, Side, SideDecomposition};

pub const THREADS_ENV: &str = "MODAL_STRENGTH_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackedSpring {
    pub label: String,
    pub kind: ModeKind,
    pub lambda: f64,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub springs: Vec<TrackedSpring>,
    /// Label of the first differential mode at this point.
    pub first_dm: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    ToNonPositive,
    ToPositive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Crossing {
    pub label: String,
    pub kind: ModeKind,
    pub lower: f64,
    pub upper: f64,
    /// Linear interpolation of the zero between the bracketing samples.
    pub at: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub side: Side,
    pub path: String,
    pub points: Vec<SweepPoint>,
    pub crossings: Vec<Crossing>,
}

impl SweepResult {
    pub fn crossings_of(&self, kind: ModeKind) -> impl Iterator<Item = &Crossing> {
        self.crossings.iter().filter(move |c| c.kind == kind)
    }

    /// Spring series of one label (`None` where the point failed or lacks it).
    pub fn series(&self, label: &str) -> Vec<Option<f64>> {
        self.points
            .iter()
            .map(|p| p.springs.iter().find(|s| s.label == label).map(|s| s.k))
            .collect()
    }
}

/// Worker count from `MODAL_STRENGTH_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

struct Track {
    label: String,
    phi: DVector<f64>,
}

fn cos_sim(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    if a.len() != b.len() {
        return 0.0;
    }
    (a.dot(b) / (a.norm() * b.norm())).abs()
}

/// Evaluates `build` at every value (in parallel, order preserved), follows
/// the modes and reports every sign change of every modal spring.
pub fn spring_sweep<F>(side: Side, path: &str, values: &[f64], build: F) -> Result<SweepResult>
where
    F: Fn(f64) -> Result<SideDecomposition> + Sync,
{
    if values.is_empty() {
        return Err(Error::input("sweep needs at least one value"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("sweep values must be finite"));
    }
    let eval = || values.par_iter().map(|&v| build(v)).collect::<Vec<_>>();
    let results = match thread_cap() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::input(format!("thread pool: {e}")))?
            .install(eval),
        None => eval(),
    };

    let tag = side.tag();
    let mut tracks: Vec<Track> = Vec::new();
    let mut next_dm = 1usize;
    let mut points = Vec::with_capacity(values.len());
    for (&value, res) in values.iter().zip(results) {
        let dec = match res {
            Ok(d) => d,
            Err(e) => {
                points.push(SweepPoint { value, springs: Vec::new(), first_dm: None, error: Some(e.to_string()) });
                continue;
            }
        };
        let mut dms: Vec<usize> = (0..dec.modes.len())
            .filter(|&i| dec.modes[i].kind == ModeKind::Differential)
            .collect();
        // initial ordering: negative eigenvalues nearest zero first, then positive ascending
        dms.sort_by(|&a, &b| {
            let (la, lb) = (dec.modes[a].lambda, dec.modes[b].lambda);
            match (la < 0.0, lb < 0.0) {
                (true, true) => lb.total_cmp(&la),
                (false, false) => la.total_cmp(&lb),
                (true, false) => std::cmp::Ordering::Less,
                (false, true) => std::cmp::Ordering::Greater,
            }
        });
        let mut labels: Vec<Option<String>> = vec![None; dec.modes.len()];
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (ti, t) in tracks.iter().enumerate() {
            for &mi in &dms {
                pairs.push((cos_sim(&t.phi, &dec.modes[mi].phi), ti, mi));
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut used_t = vec![false; tracks.len()];
        for (sim, ti, mi) in pairs {
            if sim > 0.0 && !used_t[ti] && labels[mi].is_none() {
                used_t[ti] = true;
                labels[mi] = Some(tracks[ti].label.clone());
            }
        }
        for &mi in &dms {
            if labels[mi].is_none() {
                let label = format!("DM{next_dm}-{tag}");
                next_dm += 1;
                tracks.push(Track { label: label.clone(), phi: dec.modes[mi].phi.clone() });
                labels[mi] = Some(label);
            }
        }
        for &mi in &dms {
            let l = labels[mi].as_ref().unwrap();
            if let Some(t) = tracks.iter_mut().find(|t| &t.label == l) {
                t.phi = dec.modes[mi].phi.clone();
            }
        }
        let mut springs = Vec::new();
        for (i, m) in dec.modes.iter().enumerate() {
            let label = match m.kind {
                ModeKind::Common => format!("CM-{tag}"),
                ModeKind::Differential => labels[i].clone().unwrap(),
            };
            springs.push(TrackedSpring { label, kind: m.kind, lambda: m.lambda, k: m.params.k });
        }
        springs.sort_by_key(|a| label_key(&a.label));
        let first = first_dm(&dec).and_then(|fm| {
            let i = dec.modes.iter().position(|m| m.number == fm.number)?;
            labels[i].clone()
        });
        points.push(SweepPoint { value, springs, first_dm: first, error: None });
    }

    let mut labels: Vec<(String, ModeKind)> = Vec::new();
    for p in &points {
        for s in &p.springs {
            if !labels.iter().any(|(l, _)| l == &s.label) {
                labels.push((s.label.clone(), s.kind));
            }
        }
    }
    labels.sort_by_key(|a| label_key(&a.0));
    let mut crossings = Vec::new();
    for (label, kind) in labels {
        let mut prev: Option<(f64, f64)> = None;
        for p in &points {
            let Some(s) = p.springs.iter().find(|s| s.label == label) else {
                continue;
            };
            if let Some((v0, k0)) = prev {
                if (k0 > 0.0) != (s.k > 0.0) {
                    let at = if k0 == s.k { v0 } else { v0 + (p.value - v0) * k0 / (k0 - s.k) };
                    crossings.push(Crossing {
                        label: label.clone(),
                        kind,
                        lower: v0.min(p.value),
                        upper: v0.max(p.value),
                        at,
                        direction: if s.k > 0.0 { Direction::ToPositive } else { Direction::ToNonPositive },
                    });
                }
            }
            prev = Some((p.value, s.k));
        }
    }
    Ok(SweepResult { side, path: path.to_string(), points, crossings })
}

/// Sort key putting CM first, then DMs by number.
fn label_key(label: &str) -> (u8, usize) {
    if label.starts_with("CM") {
        (0, 0)
    } else {
        let n = label
            .trim_start_matches("DM")
            .split('-')
            .next()
            .and_then(|s| s.parse().ok())
            .unwrap_or(usize::MAX);
        (1, n)
    }
}
