//! Result persistence: per-trial CSV, per-point aggregate CSV, and full
//! JSON traces. Output is byte-deterministic for a fixed trial list.
//!
//! Column order (documented contract):
//!
//! * `trials.csv`: `seed,sweep_value,scheme,sum_rate,iterations,status,
//!   f_c_hz,k_users,n_waveguides,p_max_dbm`
//! * `aggregate.csv`: `sweep_value,scheme,mean,std,n,f_c_hz,k_users,
//!   n_waveguides`

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::ao::SchemeKind;

use super::sweep::TrialResult;

#[derive(Debug, thiserror::Error)]
pub enum EmitError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EmitError + '_ {
    move |source| EmitError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.12e}")
    }
}

/// One row per trial, fixed column order.
pub fn write_trials_csv(path: &Path, trials: &[TrialResult]) -> Result<(), EmitError> {
    let mut out = String::from(
        "seed,sweep_value,scheme,sum_rate,iterations,status,f_c_hz,k_users,n_waveguides,p_max_dbm\n",
    );
    for t in trials {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            t.seed,
            fmt_f64(t.sweep_value),
            t.scheme.as_str(),
            fmt_f64(t.sum_rate),
            t.iterations,
            t.status.as_str(),
            fmt_f64(t.f_c_hz),
            t.k_users,
            t.n_waveguides,
            fmt_f64(t.p_max_dbm),
        ));
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Aggregation key in first-appearance order.
#[derive(PartialEq, Clone)]
struct AggKey {
    sweep_value: f64,
    scheme: SchemeKind,
    f_c_hz: f64,
    k_users: usize,
    n_waveguides: usize,
}

/// Mean/std/n per (sweep value, scheme, frequency, K, N) group, rows in
/// first-appearance order of the trial list.
pub fn write_aggregate_csv(path: &Path, trials: &[TrialResult]) -> Result<(), EmitError> {
    let mut keys: Vec<AggKey> = Vec::new();
    let mut groups: Vec<Vec<f64>> = Vec::new();
    for t in trials {
        let key = AggKey {
            sweep_value: t.sweep_value,
            scheme: t.scheme,
            f_c_hz: t.f_c_hz,
            k_users: t.k_users,
            n_waveguides: t.n_waveguides,
        };
        match keys.iter().position(|k| *k == key) {
            Some(i) => groups[i].push(t.sum_rate),
            None => {
                keys.push(key);
                groups.push(vec![t.sum_rate]);
            }
        }
    }
    let mut out = String::from("sweep_value,scheme,mean,std,n,f_c_hz,k_users,n_waveguides\n");
    for (key, vals) in keys.iter().zip(&groups) {
        let finite: Vec<f64> = vals.iter().copied().filter(|v| v.is_finite()).collect();
        let n = finite.len();
        let mean = if n > 0 {
            finite.iter().sum::<f64>() / n as f64
        } else {
            f64::NAN
        };
        let std = if n > 1 {
            (finite.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0))
                .sqrt()
        } else {
            0.0
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            fmt_f64(key.sweep_value),
            key.scheme.as_str(),
            fmt_f64(mean),
            fmt_f64(std),
            n,
            fmt_f64(key.f_c_hz),
            key.k_users,
            key.n_waveguides,
        ));
    }
    fs::write(path, out).map_err(io_err(path))
}

/// One JSON file per trial under `dir/traces/`.
pub fn write_trial_traces(dir: &Path, trials: &[TrialResult]) -> Result<(), EmitError> {
    let traces = dir.join("traces");
    fs::create_dir_all(&traces).map_err(io_err(&traces))?;
    for (i, t) in trials.iter().enumerate() {
        let path = traces.join(format!(
            "trial_{i:05}_{}_{}_{}.json",
            t.seed,
            t.scheme.as_str(),
            fmt_f64(t.sweep_value).replace(['.', '+'], "_"),
        ));
        let mut f = fs::File::create(&path).map_err(io_err(&path))?;
        let body = serde_json::to_string_pretty(t).expect("trial serializes");
        f.write_all(body.as_bytes()).map_err(io_err(&path))?;
    }
    Ok(())
}

/// Writes all result artifacts into `dir`.
pub fn emit_results(dir: &Path, trials: &[TrialResult]) -> Result<(), EmitError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_trials_csv(&dir.join("trials.csv"), trials)?;
    write_aggregate_csv(&dir.join("aggregate.csv"), trials)?;
    write_trial_traces(dir, trials)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ao::AoStatus;

    fn dummy_trial(seed: u64, sweep: f64, scheme: SchemeKind, rate: f64) -> TrialResult {
        TrialResult {
            seed,
            sweep_value: sweep,
            scheme,
            f_c_hz: 28e9,
            k_users: 2,
            n_waveguides: 1,
            p_max_dbm: sweep,
            users: vec![(1.0, 2.0), (3.0, 4.0)],
            user_order: vec![0, 1],
            sum_rate: rate,
            per_user_rates: vec![rate / 2.0, rate / 2.0],
            iterations: 3,
            status: AoStatus::Converged,
            wall_ms: 1.0,
            positions: vec![10.0],
            precoders: vec![vec![(0.1, 0.0)], vec![(0.05, 0.02)]],
            eval_lossless: false,
            trace: vec![],
        }
    }

    #[test]
    fn empty_trials_give_header_only_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_trials_csv(&path, &[]).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        assert_eq!(body.lines().count(), 1);
        assert!(body.starts_with("seed,sweep_value,scheme,sum_rate"));
    }

    #[test]
    fn one_trial_gives_one_data_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_trials_csv(&path, &[dummy_trial(7, 15.0, SchemeKind::Proposed, 3.5)]).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = body.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("7,"));
        assert!(lines[1].contains("proposed"));
        assert!(lines[1].contains("converged"));
    }

    #[test]
    fn aggregate_means_match_recomputation() {
        let trials = vec![
            dummy_trial(1, 10.0, SchemeKind::Proposed, 2.0),
            dummy_trial(2, 10.0, SchemeKind::Proposed, 4.0),
            dummy_trial(1, 10.0, SchemeKind::NaivePin, 1.0),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agg.csv");
        write_aggregate_csv(&path, &trials).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = body.lines().collect();
        assert_eq!(lines.len(), 3);
        let propose_row: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(propose_row[1], "proposed");
        let mean: f64 = propose_row[2].parse().unwrap();
        approx::assert_relative_eq!(mean, 3.0, max_relative = 1e-12);
        let n: usize = propose_row[4].parse().unwrap();
        assert_eq!(n, 2);
    }

    #[test]
    fn emission_is_byte_deterministic() {
        let trials = vec![
            dummy_trial(1, 10.0, SchemeKind::Proposed, 2.0),
            dummy_trial(2, 15.0, SchemeKind::IdealPin, 4.0),
        ];
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        emit_results(d1.path(), &trials).unwrap();
        emit_results(d2.path(), &trials).unwrap();
        for name in ["trials.csv", "aggregate.csv"] {
            let a = std::fs::read(d1.path().join(name)).unwrap();
            let b = std::fs::read(d2.path().join(name)).unwrap();
            assert_eq!(a, b);
        }
    }
}
