use std::fmt::Write as _;

use crate::cli_runner::output::fmt_f64;

/// Sup-norm history of one simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub times: Vec<f64>,
    pub supnorms: Vec<f64>,
    /// Extra named sup-norm columns (e.g. the `X` and `Y` parts).
    pub components: Vec<(String, Vec<f64>)>,
    /// Newest node of the segment at each recorded time.
    pub modes: Option<Vec<Vec<f64>>>,
    pub seed: u64,
    pub path_index: u64,
    pub dt_sim: f64,
}

impl PathRecord {
    pub fn new(seed: u64, path_index: u64, dt_sim: f64) -> Self {
        Self {
            times: Vec::new(),
            supnorms: Vec::new(),
            components: Vec::new(),
            modes: None,
            seed,
            path_index,
            dt_sim,
        }
    }

    pub fn with_components(mut self, names: &[&str]) -> Self {
        self.components = names.iter().map(|n| (n.to_string(), Vec::new())).collect();
        self
    }

    pub fn push(&mut self, t: f64, supnorm: f64, modes: Option<&[f64]>) {
        self.push_with(t, supnorm, &[], modes);
    }

    pub fn push_with(&mut self, t: f64, supnorm: f64, parts: &[f64], modes: Option<&[f64]>) {
        self.times.push(t);
        self.supnorms.push(supnorm);
        for ((_, col), v) in self.components.iter_mut().zip(parts) {
            col.push(*v);
        }
        if let Some(x) = modes {
            self.modes.get_or_insert_with(Vec::new).push(x.to_vec());
        }
    }

    pub fn component(&self, name: &str) -> Option<&[f64]> {
        self.components
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `time,supnorm[,components][,mode_1,...]`
    pub fn to_csv(&self) -> String {
        let mut s = String::from("time,supnorm");
        for (name, _) in &self.components {
            s.push(',');
            s.push_str(name);
        }
        let n_modes = self
            .modes
            .as_ref()
            .and_then(|m| m.first())
            .map_or(0, |r| r.len());
        for i in 1..=n_modes {
            let _ = write!(s, ",mode_{i}");
        }
        s.push('\n');
        for k in 0..self.times.len() {
            s.push_str(&fmt_f64(self.times[k]));
            s.push(',');
            s.push_str(&fmt_f64(self.supnorms[k]));
            for (_, col) in &self.components {
                s.push(',');
                s.push_str(&fmt_f64(col[k]));
            }
            if let Some(modes) = &self.modes {
                for v in &modes[k] {
                    s.push(',');
                    s.push_str(&fmt_f64(*v));
                }
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut r = PathRecord::new(1, 0, 0.5).with_components(&["a"]);
        r.push_with(0.0, 1.0, &[2.0], Some(&[3.0, 4.0]));
        r.push_with(0.5, 0.25, &[0.125], Some(&[0.0, -1.0]));
        let csv = r.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "time,supnorm,a,mode_1,mode_2");
        assert_eq!(lines.len(), 3);
        let row: Vec<f64> = lines[2].split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(row, vec![0.5, 0.25, 0.125, 0.0, -1.0]);
    }
}
