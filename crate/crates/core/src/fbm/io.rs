use std::path::Path;

use super::{FbmPath, Hurst, Method, SuperpositionSpec};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::table::{parse_f64, Table};

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

fn split(s: &str) -> Result<Vec<f64>> {
    s.split(';').map(parse_f64).collect()
}

impl FbmPath {
    pub fn to_table(&self) -> Table {
        let d = self.dim;
        let n = self.grid.n_steps();
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|k| format!("b{k}")));
        if self.wiener_increments.is_some() {
            header.extend((1..=d).map(|k| format!("dw{k}")));
        }
        let mut t = Table::new(header);
        t.meta("method", self.method);
        match &self.hurst {
            Hurst::Single(h) => {
                t.meta("hurst", h);
            }
            Hurst::Superposed(spec) => {
                t.meta("hurst_seq", join(spec.hurst_seq()));
                t.meta("weights", join(spec.weights()));
            }
            Hurst::None => {}
        }
        t.meta("seed", self.seed)
            .meta("n_steps", n)
            .meta("t0", self.grid.t0())
            .meta("horizon", self.grid.horizon())
            .meta("dim", d);
        for (k, v) in &self.notes {
            t.meta(k, v);
        }
        for i in 0..=n {
            let mut row = vec![self.grid.node(i).to_string()];
            row.extend(self.value(i).iter().map(|v| v.to_string()));
            if let Some(w) = &self.wiener_increments {
                if i < n {
                    row.extend(w[i * d..(i + 1) * d].iter().map(|v| v.to_string()));
                } else {
                    row.extend(std::iter::repeat_n(String::new(), d));
                }
            }
            t.push(row);
        }
        t
    }

    pub fn from_table(t: &Table) -> Result<Self> {
        let meta = |k: &str| t.get_meta(k).ok_or_else(|| Error::Parse(format!("missing metadata `{k}`")));
        let method = Method::parse(meta("method")?)?;
        let n: usize = meta("n_steps")?.parse().map_err(|_| Error::Parse("bad n_steps".into()))?;
        let d: usize = meta("dim")?.parse().map_err(|_| Error::Parse("bad dim".into()))?;
        let seed: u64 = meta("seed")?.parse().map_err(|_| Error::Parse("bad seed".into()))?;
        let grid = TimeGrid::new(parse_f64(meta("t0")?)?, parse_f64(meta("horizon")?)?, n)?;
        let hurst = if let Some(h) = t.get_meta("hurst") {
            Hurst::Single(parse_f64(h)?)
        } else if let Some(seq) = t.get_meta("hurst_seq") {
            Hurst::Superposed(SuperpositionSpec::new(split(seq)?, split(meta("weights")?)?)?)
        } else {
            Hurst::None
        };
        let has_dw = t.column("dw1").is_some();
        if t.header.len() != 1 + d * (1 + has_dw as usize) || t.rows.len() != n + 1 {
            return Err(Error::Parse("path table shape does not match its metadata".into()));
        }
        let mut values = Vec::with_capacity((n + 1) * d);
        let mut dw = Vec::new();
        for (i, row) in t.rows.iter().enumerate() {
            for f in &row[1..=d] {
                values.push(parse_f64(f)?);
            }
            if has_dw && i < n {
                for f in &row[d + 1..] {
                    dw.push(parse_f64(f)?);
                }
            }
        }
        let mut path = FbmPath::from_raw(grid, d, values, hurst, method, seed, has_dw.then_some(dw));
        for (k, v) in &t.meta {
            if !matches!(
                k.as_str(),
                "method" | "hurst" | "hurst_seq" | "weights" | "seed" | "n_steps" | "t0" | "horizon" | "dim"
            ) {
                path.push_note(k, v.clone());
            }
        }
        Ok(path)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_table().write_path(path)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_table(&Table::read_path(path)?)
    }
}

#[cfg(test)]
mod tests {
    use crate::fbm::{superposed_path, volterra_fbm, FbmPath, SuperpositionSpec};
    use crate::grid::TimeGrid;

    #[test]
    fn csv_round_trip_is_exact() {
        let g = TimeGrid::unit(1.0, 16).unwrap();
        let p = volterra_fbm(0.2, 2, g, 5).unwrap();
        assert_eq!(FbmPath::from_table(&p.to_table()).unwrap(), p);
        let spec = SuperpositionSpec::new(vec![0.4, 0.1], vec![0.5, 0.25]).unwrap();
        let q = superposed_path(&spec, 1, g, 9).unwrap();
        assert_eq!(FbmPath::from_table(&q.to_table()).unwrap(), q);
    }
}
