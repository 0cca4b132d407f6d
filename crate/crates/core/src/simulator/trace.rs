use std::fmt::Write as _;

use crate::numkit::DenseVector;
use crate::scalar::Scalar;

/// State of one run at a recorded step `t`, before the step-`t` update.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord<S> {
    pub t: usize,
    pub synced: bool,
    /// Communication rounds completed by `t`.
    pub round: usize,
    pub v_t: S,
    /// `‖x̂_t − x*‖²`.
    pub dist_sq: S,
    /// `f(x̂_t) − f*`.
    pub subopt: S,
    /// `‖(1/M) Σ_m g_t^m‖²` for the gradients drawn at `t`; absent at `T`.
    pub grad_sq: Option<S>,
    pub iterate: Option<DenseVector<S>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace<S> {
    pub records: Vec<TraceRecord<S>>,
    pub x_final: DenseVector<S>,
    /// `(1/T) Σ_{t=1..T} x̂_t`.
    pub bar_x: DenseVector<S>,
    /// `(1/T) Σ_{t=0..T−1} x̂_t`.
    pub bar_x_lagged: DenseVector<S>,
    pub bar_x_subopt: S,
    pub bar_x_lagged_subopt: S,
    pub comm_rounds: usize,
    pub metadata: Vec<(String, String)>,
}

impl<S: Scalar> Trace<S> {
    pub fn last(&self) -> &TraceRecord<S> {
        self.records.last().expect("traces record t = 0 and t = T")
    }

    pub fn steps(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn push_meta(&mut self, key: &str, value: impl ToString) {
        self.metadata.retain(|(k, _)| k != key);
        self.metadata.push((key.to_string(), value.to_string()));
    }

    /// `# key=value` header lines followed by one row per recorded step.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k}={v}");
        }
        let _ = writeln!(out, "# bar_x_subopt={:e}", self.bar_x_subopt.as_f64());
        let _ = writeln!(out, "# bar_x_lagged_subopt={:e}", self.bar_x_lagged_subopt.as_f64());
        out.push_str("t,synced,V_t,dist_sq,subopt,round,grad_sq\n");
        for r in &self.records {
            let g = r.grad_sq.map(|g| format!("{:e}", g.as_f64())).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{:e},{:e},{:e},{},{}",
                r.t,
                u8::from(r.synced),
                r.v_t.as_f64(),
                r.dist_sq.as_f64(),
                r.subopt.as_f64(),
                r.round,
                g
            );
        }
        out
    }
}
