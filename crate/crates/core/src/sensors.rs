//! Sparse sensor placement from pressure snapshots.
//!
//! Dominant left singular vectors of the snapshot matrix give a tailored
//! basis; Householder QR with column pivoting on the transposed basis picks
//! the rows (locations) that best condition the mode-coefficient fit. Ties on
//! the pivot norm break toward the lowest index. Snapshots are used raw by
//! default; centering is opt-in.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SnapshotMatrix {
    /// n_locations x n_snapshots, pascals.
    pub data: DMatrix<f64>,
    pub coordinates: Vec<[f64; 2]>,
    pub times: Vec<f64>,
}

impl SnapshotMatrix {
    pub fn new(data: DMatrix<f64>, coordinates: Vec<[f64; 2]>, times: Vec<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::Config("snapshot matrix must be non-empty".into()));
        }
        if coordinates.len() != data.nrows() {
            return Err(Error::Config(format!(
                "{} coordinates for {} locations",
                coordinates.len(),
                data.nrows()
            )));
        }
        if times.len() != data.ncols() {
            return Err(Error::Config(format!(
                "{} time stamps for {} snapshots",
                times.len(),
                data.ncols()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("snapshot matrix contains non-finite entries".into()));
        }
        Ok(SnapshotMatrix {
            data,
            coordinates,
            times,
        })
    }

    pub fn n_locations(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_snapshots(&self) -> usize {
        self.data.ncols()
    }

    /// Subtracts the temporal mean of every location row.
    pub fn centered(&self) -> SnapshotMatrix {
        let mut data = self.data.clone();
        for mut row in data.row_iter_mut() {
            let mean = row.sum() / row.len() as f64;
            row.apply(|v| *v -= mean);
        }
        SnapshotMatrix {
            data,
            coordinates: self.coordinates.clone(),
            times: self.times.clone(),
        }
    }

    /// Parses a locations x times CSV (no header) plus an `x,y` coordinate
    /// sidecar with one row per location.
    pub fn from_csv(snapshots: &str, coordinates: &str) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (k, line) in snapshots.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|tok| {
                    tok.trim().parse::<f64>().map_err(|_| Error::Parse {
                        line: k + 1,
                        detail: format!("bad number '{}' in snapshot CSV", tok.trim()),
                    })
                })
                .collect::<Result<_>>()?;
            if let Some(first) = rows.first() {
                if row.len() != first.len() {
                    return Err(Error::Parse {
                        line: k + 1,
                        detail: format!(
                            "ragged snapshot CSV: {} columns vs {}",
                            row.len(),
                            first.len()
                        ),
                    });
                }
            }
            rows.push(row);
        }
        let mut coords = Vec::new();
        for (k, line) in coordinates.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 2 {
                return Err(Error::Parse {
                    line: k + 1,
                    detail: "coordinate sidecar rows must be 'x,y'".into(),
                });
            }
            let parse = |tok: &str| {
                tok.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: k + 1,
                    detail: format!("bad coordinate '{}'", tok.trim()),
                })
            };
            coords.push([parse(parts[0])?, parse(parts[1])?]);
        }
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.len());
        let data = DMatrix::from_fn(n, m, |i, j| rows[i][j]);
        let times = (0..m).map(|j| j as f64).collect();
        SnapshotMatrix::new(data, coords, times)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SensorSelection {
    pub r: usize,
    pub indices: Vec<usize>,
    pub coordinates: Vec<[f64; 2]>,
    #[serde(skip)]
    pub modes: DMatrix<f64>,
    pub reconstruction_rms: f64,
}

impl SensorSelection {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("selection serializes")
    }

    pub fn validate(&self, n_locations: usize) -> Result<()> {
        if self.indices.len() != self.r {
            return Err(Error::Config("selection length does not match r".into()));
        }
        let mut seen = vec![false; n_locations];
        for &i in &self.indices {
            if i >= n_locations || seen[i] {
                return Err(Error::Config(format!("invalid or repeated sensor index {i}")));
            }
            seen[i] = true;
        }
        // Orthonormality of the mode basis.
        let g = self.modes.transpose() * &self.modes;
        for i in 0..self.r {
            for j in 0..self.r {
                let want = if i == j { 1.0 } else { 0.0 };
                if (g[(i, j)] - want).abs() > 1e-10 {
                    return Err(Error::Config(format!(
                        "mode basis not orthonormal: gram[{i}][{j}] = {}",
                        g[(i, j)]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// First `r` left singular vectors of the snapshot matrix, ordered by
/// descending singular value.
pub fn svd_modes(x: &SnapshotMatrix, r: usize) -> Result<DMatrix<f64>> {
    let max_r = x.n_locations().min(x.n_snapshots());
    if r == 0 || r > max_r {
        return Err(Error::Config(format!(
            "mode count {r} outside 1..={max_r} for a {}x{} snapshot matrix",
            x.n_locations(),
            x.n_snapshots()
        )));
    }
    let svd = x.data.clone().svd(true, false);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    // nalgebra returns singular values sorted descending.
    Ok(u.columns(0, r).into_owned())
}

/// Householder QR with column pivoting on `modes^T`; returns the first `r`
/// pivot columns, i.e. the selected sensor locations.
pub fn qr_pivot_select(modes: &DMatrix<f64>) -> Result<Vec<usize>> {
    let r = modes.ncols();
    let n = modes.nrows();
    if r == 0 || n < r {
        return Err(Error::DegenerateSelection(format!(
            "cannot pick {r} sensors from {n} locations"
        )));
    }
    // Work on A = modes^T (r x n); pivots are columns of A.
    let mut a = modes.transpose();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut norms2: Vec<f64> = (0..n).map(|j| a.column(j).norm_squared()).collect();
    let scale = norms2.iter().cloned().fold(0.0, f64::max).max(1.0);

    for k in 0..r {
        // Pivot: max remaining column norm, lowest index on ties.
        let mut best = k;
        for j in k + 1..n {
            if norms2[j] > norms2[best] + 1e-14 * scale {
                best = j;
            }
        }
        if norms2[best] <= 1e-24 * scale {
            return Err(Error::DegenerateSelection(format!(
                "mode basis is rank deficient: remaining column norms vanish at pivot {k} of {r}"
            )));
        }
        if best != k {
            a.swap_columns(k, best);
            perm.swap(k, best);
            norms2.swap(k, best);
        }
        // Householder reflector annihilating A[k+1.., k].
        let col: Vec<f64> = (k..r).map(|i| a[(i, k)]).collect();
        let alpha = -col[0].signum() * col.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut v = col;
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for j in k..n {
                let dot: f64 = (k..r).map(|i| v[i - k] * a[(i, j)]).sum();
                let c = 2.0 * dot / vnorm2;
                for i in k..r {
                    a[(i, j)] -= c * v[i - k];
                }
            }
        }
        // Downdate the remaining column norms below the eliminated row.
        for j in k + 1..n {
            norms2[j] = (k + 1..r).map(|i| a[(i, j)] * a[(i, j)]).sum();
        }
    }
    Ok(perm[..r].to_vec())
}

/// Least-squares mode-coefficient fit from the selected rows, full-field
/// reconstruction, and the relative Frobenius error.
pub fn reconstruction_error(x: &SnapshotMatrix, modes: &DMatrix<f64>, indices: &[usize]) -> Result<f64> {
    let r = modes.ncols();
    // Selected-row system M c = X_sel per snapshot.
    let m = DMatrix::from_fn(indices.len(), r, |i, j| modes[(indices[i], j)]);
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 0.0 || smax / smin > 1e12 {
        let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        return Err(Error::Conditioning { cond });
    }
    let x_sel = DMatrix::from_fn(indices.len(), x.n_snapshots(), |i, j| {
        x.data[(indices[i], j)]
    });
    let coeffs = svd.solve(&x_sel, 0.0).map_err(|e| Error::Config(e.to_string()))?;
    let reconstructed = modes * coeffs;
    let err = (&x.data - &reconstructed).norm();
    let denom = x.data.norm();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(err / denom)
}

/// Full workflow: modes, pivot selection, reconstruction report.
pub fn select_sensors(x: &SnapshotMatrix, r: usize, center: bool) -> Result<SensorSelection> {
    let working = if center { x.centered() } else { x.clone() };
    let modes = svd_modes(&working, r)?;
    let indices = qr_pivot_select(&modes)?;
    let rms = reconstruction_error(&working, &modes, &indices)?;
    let selection = SensorSelection {
        r,
        coordinates: indices.iter().map(|&i| x.coordinates[i]).collect(),
        indices,
        modes,
        reconstruction_rms: rms,
    };
    selection.validate(x.n_locations())?;
    Ok(selection)
}

/// Greedy determinant-volume row selection; the small-size oracle for the
/// pivoted QR. At each step it adds the row maximizing the volume
/// sqrt(det(C C^T)) of the chosen submatrix, lowest index on ties.
pub fn greedy_volume_select(modes: &DMatrix<f64>, r: usize) -> Result<Vec<usize>> {
    let n = modes.nrows();
    if r == 0 || n < r || modes.ncols() < r {
        return Err(Error::DegenerateSelection("invalid greedy selection size".into()));
    }
    let mut chosen: Vec<usize> = Vec::new();
    for _ in 0..r {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            if chosen.contains(&i) {
                continue;
            }
            let mut rows = chosen.clone();
            rows.push(i);
            let c = DMatrix::from_fn(rows.len(), modes.ncols(), |a, b| modes[(rows[a], b)]);
            let gram = &c * c.transpose();
            let vol2 = gram.determinant().max(0.0);
            let better = match best {
                None => true,
                Some((_, v)) => vol2 > v + 1e-14,
            };
            if better {
                best = Some((i, vol2));
            }
        }
        let (idx, vol2) = best.unwrap();
        if vol2 <= 1e-24 {
            return Err(Error::DegenerateSelection(
                "greedy volume collapsed to zero".into(),
            ));
        }
        chosen.push(idx);
    }
    Ok(chosen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn matrix_of(data: DMatrix<f64>) -> SnapshotMatrix {
        let n = data.nrows();
        let m = data.ncols();
        SnapshotMatrix::new(
            data,
            (0..n).map(|i| [i as f64, 0.0]).collect(),
            (0..m).map(|j| j as f64).collect(),
        )
        .unwrap()
    }

    fn random_orthonormal(n: usize, r: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, r, |_, _| rng.gen_range(-1.0..1.0));
        let qr = a.qr();
        qr.q().columns(0, r).into_owned()
    }

    #[test]
    fn validation_rejects_bad_inputs() {
        assert!(SnapshotMatrix::new(DMatrix::zeros(0, 3), vec![], vec![0.0; 3]).is_err());
        let data = DMatrix::from_element(2, 2, 1.0);
        assert!(SnapshotMatrix::new(data.clone(), vec![[0.0; 2]; 3], vec![0.0; 2]).is_err());
        let mut bad = data.clone();
        bad[(0, 0)] = f64::NAN;
        assert!(SnapshotMatrix::new(bad, vec![[0.0; 2]; 2], vec![0.0; 2]).is_err());
        assert!(SnapshotMatrix::new(data, vec![[0.0; 2]; 2], vec![0.0; 2]).is_ok());
    }

    #[test]
    fn rank_one_modes_recover_direction() {
        let u = DVector::from_column_slice(&[1.0, 2.0, -2.0]);
        let v = DVector::from_column_slice(&[0.5, -1.0, 2.0, 1.5]);
        let x = matrix_of(&u * v.transpose());
        let modes = svd_modes(&x, 1).unwrap();
        let unit = &u / u.norm();
        let aligned: f64 = modes.column(0).dot(&unit);
        for i in 0..3 {
            assert!((modes[(i, 0)] - aligned.signum() * unit[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn orthogonal_rows_give_known_singular_values() {
        // Rows along orthogonal directions scaled (3, 2, 1).
        let x_data = DMatrix::from_row_slice(
            3,
            3,
            &[3.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0],
        );
        let x = matrix_of(x_data.clone());
        let svd = x_data.svd(true, true);
        let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
        assert!((sv[0] - 3.0).abs() < 1e-12);
        assert!((sv[1] - 2.0).abs() < 1e-12);
        assert!((sv[2] - 1.0).abs() < 1e-12);
        let modes = svd_modes(&x, 3).unwrap();
        // Each mode aligns with a coordinate axis.
        for j in 0..3 {
            assert!((modes.column(j).amax() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn eckart_young_truncation_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let data = DMatrix::from_fn(6, 9, |_, _| rng.gen_range(-1.0..1.0));
        let x = matrix_of(data.clone());
        let r = 3;
        let svd = data.clone().svd(true, true);
        let u = svd.u.as_ref().unwrap();
        let vt = svd.v_t.as_ref().unwrap();
        let mut truncated = DMatrix::zeros(6, 9);
        for k in 0..r {
            truncated += svd.singular_values[k] * u.column(k) * vt.row(k);
        }
        let tail: f64 = (r..6)
            .map(|k| svd.singular_values[k] * svd.singular_values[k])
            .sum::<f64>()
            .sqrt();
        assert!(((&data - &truncated).norm() - tail).abs() < 1e-10);
        // and svd_modes returns exactly those leading left vectors
        let modes = svd_modes(&x, r).unwrap();
        for k in 0..r {
            let dot: f64 = modes.column(k).dot(&u.column(k));
            assert!((dot.abs() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn mode_count_out_of_range_is_config_error() {
        let x = matrix_of(DMatrix::from_element(4, 3, 1.0));
        assert!(matches!(svd_modes(&x, 0), Err(Error::Config(_))));
        assert!(matches!(svd_modes(&x, 4), Err(Error::Config(_))));
        assert!(svd_modes(&x, 3).is_ok() || svd_modes(&x, 1).is_ok());
    }

    #[test]
    fn rank_one_pivot_selects_max_magnitude_row() {
        let psi = DMatrix::from_column_slice(3, 1, &[0.1, 0.2, 0.97]);
        assert_eq!(qr_pivot_select(&psi).unwrap(), vec![2]);
    }

    #[test]
    fn identity_rows_are_selected() {
        // 2x2 identity embedded among two zero rows.
        let psi = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let mut got = qr_pivot_select(&psi).unwrap();
        got.sort_unstable();
        assert_eq!(got, vec![1, 3]);
    }

    #[test]
    fn rank_deficient_basis_rejected() {
        let psi = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 2.0, 4.0, -1.0, -2.0, 0.5, 1.0]);
        assert!(matches!(
            qr_pivot_select(&psi),
            Err(Error::DegenerateSelection(_))
        ));
    }

    #[test]
    fn pivoting_matches_greedy_volume_oracle() {
        let mut checked = 0;
        for trial in 0..100 {
            let r = 1 + (trial % 3);
            let n = (r + 2) + (trial % (8 - (r + 2) + 1));
            let psi = random_orthonormal(n, r, 1000 + trial as u64);
            let qr = qr_pivot_select(&psi).unwrap();
            let greedy = greedy_volume_select(&psi, r).unwrap();
            assert_eq!(qr, greedy, "trial {trial}: n={n} r={r}");
            checked += 1;
        }
        assert_eq!(checked, 100);
    }

    #[test]
    fn rank_match_reconstructs_exactly() {
        let u = DVector::from_column_slice(&[1.0, -0.5, 2.0, 0.25]);
        let v = DVector::from_column_slice(&[1.0, 2.0, 3.0]);
        let x = matrix_of(&u * v.transpose());
        let sel = select_sensors(&x, 1, false).unwrap();
        assert!(sel.reconstruction_rms < 1e-10, "rms = {}", sel.reconstruction_rms);
    }

    #[test]
    fn error_non_increasing_in_mode_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        // Smooth synthetic field: superposition of decaying spatial modes.
        let n = 20;
        let m = 30;
        let data = DMatrix::from_fn(n, m, |i, j| {
            (1..=6)
                .map(|k| {
                    let amp = 1.0 / (k * k) as f64;
                    amp * ((k as f64) * i as f64 / n as f64 * 3.0).sin()
                        * ((k as f64) * j as f64 / m as f64 * 2.0).cos()
                })
                .sum::<f64>()
                + 1e-6 * rng.gen_range(-1.0..1.0)
        });
        let x = matrix_of(data);
        let mut last = f64::INFINITY;
        for r in [1usize, 2, 4, 6, 8] {
            let sel = select_sensors(&x, r, false).unwrap();
            assert!(
                sel.reconstruction_rms <= last + 1e-9,
                "rms increased at r={r}: {} > {last}",
                sel.reconstruction_rms
            );
            last = sel.reconstruction_rms;
        }
    }

    #[test]
    fn full_observation_equals_truncation_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let data = DMatrix::from_fn(5, 7, |_, _| rng.gen_range(-1.0..1.0));
        let x = matrix_of(data.clone());
        let r = 3;
        let modes = svd_modes(&x, r).unwrap();
        let all: Vec<usize> = (0..5).collect();
        let err = reconstruction_error(&x, &modes, &all).unwrap();
        let svd = data.svd(false, false);
        let tail: f64 = (r..5)
            .map(|k| svd.singular_values[k] * svd.singular_values[k])
            .sum::<f64>()
            .sqrt();
        let total = svd
            .singular_values
            .iter()
            .map(|s| s * s)
            .sum::<f64>()
            .sqrt();
        assert!((err - tail / total).abs() < 1e-10, "{err} vs {}", tail / total);
    }

    #[test]
    fn positive_scaling_leaves_indices_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let data = DMatrix::from_fn(10, 12, |_, _| rng.gen_range(0.5..2.0));
        let x = matrix_of(data.clone());
        let scaled = matrix_of(data * 7.25);
        let a = select_sensors(&x, 4, false).unwrap();
        let b = select_sensors(&scaled, 4, false).unwrap();
        assert_eq!(a.indices, b.indices);
    }

    #[test]
    fn selection_json_and_validation() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let data = DMatrix::from_fn(6, 8, |_, _| rng.gen_range(-1.0..1.0));
        let x = matrix_of(data);
        let sel = select_sensors(&x, 2, false).unwrap();
        sel.validate(6).unwrap();
        let json = sel.to_json();
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed["r"], 2);
        assert_eq!(parsed["indices"].as_array().unwrap().len(), 2);
        assert!(parsed["reconstruction_rms"].as_f64().unwrap() >= 0.0);
    }

    #[test]
    fn csv_round_trip_and_parse_errors() {
        let snapshots = "1.0,2.0,3.0\n4.0,5.0,6.0\n";
        let coords = "0.0,0.0\n1.0,0.5\n";
        let x = SnapshotMatrix::from_csv(snapshots, coords).unwrap();
        assert_eq!(x.n_locations(), 2);
        assert_eq!(x.n_snapshots(), 3);
        assert_eq!(x.data[(1, 2)], 6.0);
        assert_eq!(x.coordinates[1], [1.0, 0.5]);

        let err = SnapshotMatrix::from_csv("1.0,oops\n", coords).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = SnapshotMatrix::from_csv("1.0,2.0\n3.0\n", coords).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn centering_removes_row_means() {
        let data = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 10.0, 10.0, 10.0]);
        let x = matrix_of(data).centered();
        assert!((x.data.row(0).sum()).abs() < 1e-12);
        for j in 0..3 {
            assert_eq!(x.data[(1, j)], 0.0);
        }
    }
}
