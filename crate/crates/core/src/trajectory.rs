use serde::{Deserialize, Serialize};

/// Diagnostics recorded at the end of one outer iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub iteration: usize,
    /// Surrogate with this iteration's covariances, noise block normalized.
    pub surrogate: f64,
    /// Negative log-likelihood with scales refit to the current filters.
    pub nll: f64,
    /// Cumulative algorithm time, diagnostics excluded.
    pub wall_seconds: f64,
    pub stationarity: f64,
    /// Surrogate before the update, then after each block update (opt-in).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inner: Vec<f64>,
    /// Largest ‖W_sᴴV_zW_z‖_F seen after a noise update (opt-in).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oc_residual: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub records: Vec<TrajectoryRecord>,
    /// Set when the optional tolerance stop fired.
    pub stopped_early: bool,
}

impl TrajectoryLog {
    pub fn push(&mut self, rec: TrajectoryRecord) {
        debug_assert!(self.records.last().is_none_or(|r| {
            r.iteration < rec.iteration && r.wall_seconds <= rec.wall_seconds
        }));
        self.records.push(rec);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn nll(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.nll).collect()
    }

    pub fn surrogate(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.surrogate).collect()
    }

    /// Largest relative step increase of a sequence, zero when nonincreasing.
    pub fn max_relative_increase(values: &[f64]) -> f64 {
        values
            .windows(2)
            .map(|w| (w[1] - w[0]) / w[0].abs().max(1e-300))
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> crate::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "surrogate", "nll", "wall_seconds", "stationarity"])?;
        for r in &self.records {
            w.write_record([
                r.iteration.to_string(),
                format!("{:.17e}", r.surrogate),
                format!("{:.17e}", r.nll),
                format!("{:.9}", r.wall_seconds),
                format!("{:.6e}", r.stationarity),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
