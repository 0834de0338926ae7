//! Quantised beam-direction codebooks and measurement subsets.

use crate::array::Angles;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Cartesian product of an elevation list and a uniform azimuth grid.
///
/// Entries are elevation-major (in the order the elevations were given),
/// azimuth ascending within a row. Angles are beam angles (see
/// [`crate::array`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub azimuths: Vec<f64>,
    pub elevations: Vec<f64>,
    pub entries: Vec<Angles>,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Azimuth count per row.
    pub fn n_az(&self) -> usize {
        self.azimuths.len()
    }

    /// Elevation count.
    pub fn m(&self) -> usize {
        self.elevations.len()
    }

    /// `(row, column)` of an entry index.
    pub fn grid_position(&self, index: usize) -> (usize, usize) {
        (index / self.n_az(), index % self.n_az())
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.n_az() + col
    }

    /// The hardware grid: azimuth -54°..54° in 5.4° steps at elevations
    /// +18°, 0°, -18° (63 beams).
    pub fn standard() -> Codebook {
        build_codebook(-54.0, 54.0, 5.4, &[18.0, 0.0, -18.0]).expect("standard grid is valid")
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["index", "az_deg", "el_deg"])?;
        for (i, a) in self.entries.iter().enumerate() {
            out.write_record([i.to_string(), fmt_deg(a.az_deg()), fmt_deg(a.el_deg())])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn fmt_deg(v: f64) -> String {
    let r = (v * 1e9).round() / 1e9;
    format!("{}", if r == 0.0 { 0.0 } else { r })
}

/// Builds a codebook from degrees. The azimuth count is
/// `round((max - min) / step) + 1`; values are spread exactly from `min` to
/// `max`.
pub fn build_codebook(az_min: f64, az_max: f64, az_step: f64, elevations: &[f64]) -> Result<Codebook> {
    if elevations.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let single = az_min == az_max;
    if !single && !(az_step > 0.0 && az_max > az_min) {
        return Err(Error::EmptyGrid);
    }
    let n = if single { 1 } else { ((az_max - az_min) / az_step).round() as usize + 1 };
    let azimuths: Vec<f64> = if n == 1 {
        vec![az_min.to_radians()]
    } else {
        (0..n).map(|i| (az_min + (az_max - az_min) * i as f64 / (n - 1) as f64).to_radians()).collect()
    };
    let elevations: Vec<f64> = elevations.iter().map(|e| e.to_radians()).collect();
    for w in 0..elevations.len() {
        if elevations[..w].contains(&elevations[w]) {
            return Err(Error::InvalidRange("duplicate elevation".into()));
        }
    }
    let entries = elevations.iter().flat_map(|&el| azimuths.iter().map(move |&az| Angles::new(az, el))).collect();
    Ok(Codebook { azimuths, elevations, entries })
}

/// Column indices covering an `n`-point row with `c` picks:
/// `round(i (n-1) / (c-1))`; a single pick takes the centre.
pub fn row_picks(n: usize, c: usize) -> Vec<usize> {
    match c {
        0 => vec![],
        1 => vec![(n - 1) / 2],
        _ => (0..c).map(|i| ((i * (n - 1)) as f64 / (c - 1) as f64).round() as usize).collect(),
    }
}

/// Row priority for subsets: smallest |elevation| first, positive before
/// negative on ties.
pub fn row_order(cb: &Codebook) -> Vec<usize> {
    let mut rows: Vec<usize> = (0..cb.m()).collect();
    rows.sort_by(|&a, &b| {
        let (ea, eb) = (cb.elevations[a], cb.elevations[b]);
        ea.abs().total_cmp(&eb.abs()).then(eb.total_cmp(&ea))
    });
    rows
}

/// Codebook indices of the `s`-beam measurement subset: fill the 0° row
/// with uniformly spread azimuths, then overflow to +18°, then -18°.
pub fn beam_subset_indices(cb: &Codebook, s: usize) -> Result<Vec<usize>> {
    if s == 0 || s > cb.len() {
        return Err(Error::SubsetOutOfRange { s, max: cb.len() });
    }
    let n = cb.n_az();
    let mut left = s;
    let mut out = Vec::with_capacity(s);
    for row in row_order(cb) {
        if left == 0 {
            break;
        }
        let c = left.min(n);
        out.extend(row_picks(n, c).into_iter().map(|col| cb.index(row, col)));
        left -= c;
    }
    Ok(out)
}

/// The ordered beams of [`beam_subset_indices`].
pub fn beam_subset(cb: &Codebook, s: usize) -> Result<Vec<Angles>> {
    Ok(beam_subset_indices(cb, s)?.into_iter().map(|i| cb.entries[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn standard_grid() {
        let cb = Codebook::standard();
        assert_eq!(cb.len(), 63);
        assert_eq!(cb.n_az(), 21);
        assert_eq!(cb.m(), 3);
        assert_eq!(cb.azimuths[10], 0.0);
        assert!((cb.azimuths[0].to_degrees() + 54.0).abs() < 1e-12);
        assert!((cb.azimuths[20].to_degrees() - 54.0).abs() < 1e-12);
        for w in cb.azimuths.windows(2) {
            assert!(((w[1] - w[0]).to_degrees() - 5.4).abs() < 1e-9);
        }
        // elevation-major
        assert!((cb.entries[0].el_deg() - 18.0).abs() < 1e-12);
        assert!((cb.entries[21].el_deg()).abs() < 1e-12);
        let set: HashSet<(u64, u64)> = cb.entries.iter().map(|a| (a.az.to_bits(), a.el.to_bits())).collect();
        assert_eq!(set.len(), 63);
    }

    #[test]
    fn degenerate_grids() {
        let cb = build_codebook(10.0, 10.0, 1.0, &[0.0]).unwrap();
        assert_eq!(cb.len(), 1);
        assert!(matches!(build_codebook(0.0, 10.0, 1.0, &[]), Err(Error::EmptyGrid)));
        assert!(matches!(build_codebook(0.0, 10.0, 0.0, &[0.0]), Err(Error::EmptyGrid)));
        assert!(matches!(build_codebook(10.0, 0.0, 1.0, &[0.0]), Err(Error::EmptyGrid)));
    }

    #[test]
    fn subset_examples() {
        let cb = Codebook::standard();
        let s3 = beam_subset(&cb, 3).unwrap();
        let want = [(-54.0, 0.0), (0.0, 0.0), (54.0, 0.0)];
        for (a, (az, el)) in s3.iter().zip(want) {
            assert!((a.az_deg() - az).abs() < 1e-9 && (a.el_deg() - el).abs() < 1e-9);
        }
        let s21 = beam_subset(&cb, 21).unwrap();
        assert!(s21.iter().all(|a| a.el == 0.0));
        assert_eq!(s21.len(), 21);
        let mut all = beam_subset_indices(&cb, 63).unwrap();
        all.sort();
        assert_eq!(all, (0..63).collect::<Vec<_>>());
        // Overflow goes to +18° before -18°.
        let s24 = beam_subset(&cb, 24).unwrap();
        assert!(s24[21..].iter().all(|a| (a.el_deg() - 18.0).abs() < 1e-9));
        assert!(matches!(beam_subset(&cb, 0), Err(Error::SubsetOutOfRange { .. })));
        assert!(matches!(beam_subset(&cb, 64), Err(Error::SubsetOutOfRange { .. })));
    }

    #[test]
    fn nesting_on_shipped_sequence() {
        let cb = Codebook::standard();
        let sizes = [3usize, 5, 7, 11, 21];
        for &a in &sizes {
            for &b in &sizes {
                if a < b && (b - 1) % (a - 1) == 0 {
                    let sa: HashSet<usize> = beam_subset_indices(&cb, a).unwrap().into_iter().collect();
                    let sb: HashSet<usize> = beam_subset_indices(&cb, b).unwrap().into_iter().collect();
                    assert!(sa.is_subset(&sb), "{a} ⊄ {b}");
                }
            }
        }
    }

    fn max_gap(cols: &[usize]) -> usize {
        cols.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
    }

    #[test]
    fn uniform_coverage_is_optimal() {
        // Brute force over every subset of the 21-point row that keeps both
        // endpoints.
        let n = 21;
        for s in [3usize, 4, 5, 6, 7] {
            let picks = row_picks(n, s);
            let mut best = usize::MAX;
            let inner: Vec<usize> = (1..n - 1).collect();
            let mut idx: Vec<usize> = (0..s - 2).collect();
            loop {
                let mut cols = vec![0];
                cols.extend(idx.iter().map(|&i| inner[i]));
                cols.push(n - 1);
                best = best.min(max_gap(&cols));
                // next combination
                let k = s - 2;
                let mut i = k;
                while i > 0 && idx[i - 1] == inner.len() - k + i - 1 {
                    i -= 1;
                }
                if i == 0 {
                    break;
                }
                idx[i - 1] += 1;
                for j in i..k {
                    idx[j] = idx[j - 1] + 1;
                }
            }
            assert_eq!(max_gap(&picks), best, "S={s}");
        }
    }

    #[test]
    fn csv_export() {
        let cb = build_codebook(-5.4, 5.4, 5.4, &[0.0]).unwrap();
        let mut buf = Vec::new();
        cb.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "index,az_deg,el_deg\n0,-5.4,0\n1,0,0\n2,5.4,0\n");
    }
}
