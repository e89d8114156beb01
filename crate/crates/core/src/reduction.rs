//! Clustering-based model reduction.
//!
//! Nodes whose head histories look alike are grouped; each group becomes one
//! reduced coordinate, so every reduced state still refers to a known set of
//! physical nodes.

use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{sample_run, Drivers, FieldModel, Trajectory, WeatherSample};
use crate::hydraulics::csv_error;
use crate::integrate::{advance, Dynamics, EvalInfo, Forcing, MassLedger, StepControl, Workspace};

/// Node trajectories sampled on a common time grid; row `i` is node `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    times: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

impl SnapshotMatrix {
    pub fn new(times: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::shape("snapshot matrix needs at least one sample"));
        }
        if rows.is_empty() {
            return Err(Error::shape("snapshot matrix has no rows"));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != times.len() {
                return Err(Error::shape(format!(
                    "row {i} has {} samples, expected {}",
                    r.len(),
                    times.len()
                )));
            }
            if let Some(k) = r.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    node: i,
                    time: times[k],
                });
            }
        }
        Ok(SnapshotMatrix { times, rows })
    }

    pub fn from_trajectory(tr: &Trajectory) -> Result<Self> {
        let n = tr.states.first().map_or(0, Vec::len);
        let rows = (0..n).map(|i| tr.node_series(i)).collect();
        SnapshotMatrix::new(tr.times.clone(), rows)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn n_samples(&self) -> usize {
        self.times.len()
    }

    /// Copy with each row shifted to zero mean and scaled to unit variance.
    /// Constant rows are only centred.
    pub fn standardized(&self) -> SnapshotMatrix {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let n = r.len() as f64;
                let mean = r.iter().sum::<f64>() / n;
                let sd = (r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                let scale = if sd > 0.0 { 1.0 / sd } else { 1.0 };
                r.iter().map(|v| (v - mean) * scale).collect()
            })
            .collect();
        SnapshotMatrix {
            times: self.times.clone(),
            rows,
        }
    }
}

/// Simulates the full model and keeps every `dt_sample` seconds of it.
pub fn collect_snapshots(
    model: &FieldModel,
    x0: &[f64],
    drivers: &Drivers,
    t0: f64,
    horizon: f64,
    dt_sample: f64,
    ctrl: &StepControl,
) -> Result<SnapshotMatrix> {
    let tr = model.simulate(x0, drivers, t0, horizon, dt_sample, ctrl)?;
    SnapshotMatrix::from_trajectory(&tr)
}

/// A partition of node ids into non-empty, disjoint clusters.
///
/// Clusters are ordered by their smallest member and members are sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    clusters: Vec<Vec<usize>>,
    threshold: f64,
}

impl Clustering {
    /// Checks that `clusters` partitions `0..n` and normalises the ordering.
    pub fn new(mut clusters: Vec<Vec<usize>>, n: usize, threshold: f64) -> Result<Self> {
        let mut seen = vec![false; n];
        for c in &mut clusters {
            if c.is_empty() {
                return Err(Error::Consistency("empty cluster".into()));
            }
            c.sort_unstable();
            for &id in c.iter() {
                if id >= n {
                    return Err(Error::Consistency(format!("node {id} outside 0..{n}")));
                }
                if std::mem::replace(&mut seen[id], true) {
                    return Err(Error::Consistency(format!("node {id} is in two clusters")));
                }
            }
        }
        if let Some(id) = seen.iter().position(|s| !s) {
            return Err(Error::Consistency(format!("node {id} is in no cluster")));
        }
        clusters.sort_unstable_by_key(|c| c[0]);
        Ok(Clustering {
            clusters,
            threshold,
        })
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Number of clusters, i.e. the reduced order.
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn n_nodes(&self) -> usize {
        self.clusters.iter().map(Vec::len).sum()
    }

    /// Cluster index of every node.
    pub fn labels(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_nodes()];
        for (j, c) in self.clusters.iter().enumerate() {
            for &id in c {
                out[id] = j;
            }
        }
        out
    }

    /// Builds a clustering from per-node labels (any integers).
    pub fn from_labels(labels: &[usize], threshold: f64) -> Result<Self> {
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for (id, &l) in labels.iter().enumerate() {
            groups.entry(l).or_default().push(id);
        }
        Clustering::new(groups.into_values().collect(), labels.len(), threshold)
    }

    /// `node_id,cluster_id` rows after a `# threshold=` comment.
    pub fn to_csv(&self) -> String {
        let mut s = format!("# threshold={}\nnode_id,cluster_id\n", self.threshold);
        for (id, l) in self.labels().iter().enumerate() {
            s.push_str(&format!("{id},{l}\n"));
        }
        s
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut threshold = f64::NAN;
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            if let Some(v) = line
                .trim_start_matches('#')
                .trim()
                .strip_prefix("threshold=")
            {
                threshold = v.trim().parse().map_err(|_| Error::Parse {
                    path: origin.into(),
                    line: 1,
                    msg: format!("bad threshold {v:?}"),
                })?;
            }
        }
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| csv_error(origin, e))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["node_id", "cluster_id"] {
            return Err(Error::Schema {
                path: origin.into(),
                msg: format!(
                    "expected columns node_id,cluster_id, found {:?}",
                    headers.iter().collect::<Vec<_>>()
                ),
            });
        }
        let mut pairs = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_error(origin, e))?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let field = |k: usize| -> Result<usize> {
                rec[k].parse().map_err(|_| Error::Parse {
                    path: origin.into(),
                    line,
                    msg: format!("expected a non-negative integer, found {:?}", &rec[k]),
                })
            };
            pairs.push((field(0)?, field(1)?));
        }
        let n = pairs.len();
        let mut labels = vec![usize::MAX; n];
        for (id, l) in pairs {
            if id >= n || labels[id] != usize::MAX {
                return Err(Error::Consistency(format!(
                    "{origin}: node ids must be 0..{n} without repeats"
                )));
            }
            labels[id] = l;
        }
        Clustering::from_labels(&labels, threshold)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Clustering::parse(&text, &path.display().to_string())
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Average-linkage agglomerative clustering of the rows of `x`.
///
/// Merging continues while the closest pair of clusters is within
/// `threshold` (Euclidean distance between rows). Equal distances are
/// resolved by merging the pair whose smallest members come first.
pub fn cluster_states(x: &SnapshotMatrix, threshold: f64) -> Result<Clustering> {
    if !(threshold > 0.0) {
        return Err(Error::param(format!(
            "clustering threshold must be positive, got {threshold}"
        )));
    }
    let rows = x.rows();
    let n = rows.len();
    // Slot i always holds the cluster whose smallest node is i.
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = euclidean(&rows[i], &rows[j]);
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut active = vec![true; n];
    // Nearest active partner above each slot.
    let mut nn = vec![usize::MAX; n];
    let mut nnd = vec![f64::INFINITY; n];
    let scan = |i: usize, d: &[f64], active: &[bool]| -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for j in i + 1..n {
            if active[j] && d[i * n + j] < best.1 {
                best = (j, d[i * n + j]);
            }
        }
        best
    };
    for i in 0..n {
        (nn[i], nnd[i]) = scan(i, &d, &active);
    }

    loop {
        let mut best: Option<usize> = None;
        for i in (0..n).filter(|&i| active[i] && nn[i] != usize::MAX) {
            if best.map_or(true, |b| nnd[i] < nnd[b]) {
                best = Some(i);
            }
        }
        let Some(a) = best else { break };
        if nnd[a] > threshold {
            break;
        }
        let b = nn[a];
        let (sa, sb) = (members[a].len() as f64, members[b].len() as f64);
        active[b] = false;
        for k in (0..n).filter(|&k| active[k] && k != a) {
            let v = (sa * d[a * n + k] + sb * d[b * n + k]) / (sa + sb);
            d[a * n + k] = v;
            d[k * n + a] = v;
        }
        let moved = std::mem::take(&mut members[b]);
        members[a].extend(moved);
        (nn[a], nnd[a]) = scan(a, &d, &active);
        for p in (0..a).filter(|&p| active[p]) {
            if nn[p] == a || nn[p] == b {
                (nn[p], nnd[p]) = scan(p, &d, &active);
            } else if d[p * n + a] < nnd[p] || (d[p * n + a] == nnd[p] && a < nn[p]) {
                nn[p] = a;
                nnd[p] = d[p * n + a];
            }
        }
        for p in a + 1..b {
            if active[p] && nn[p] == b {
                (nn[p], nnd[p]) = scan(p, &d, &active);
            }
        }
    }
    let clusters = members.into_iter().filter(|m| !m.is_empty()).collect();
    Clustering::new(clusters, n, threshold)
}

/// The n×r matrix whose column j is `1/sqrt(|C_j|)` on the members of
/// cluster j and zero elsewhere. Stored by cluster, not densely.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    clustering: Clustering,
    labels: Vec<usize>,
    weights: Vec<f64>,
}

pub fn build_projection(c: &Clustering, n: usize) -> Result<ProjectionMatrix> {
    if c.n_nodes() != n {
        return Err(Error::Consistency(format!(
            "clustering covers {} nodes, expected {n}",
            c.n_nodes()
        )));
    }
    // Re-validate in case the clustering was assembled by hand.
    let clustering = Clustering::new(c.clusters().to_vec(), n, c.threshold())?;
    Ok(ProjectionMatrix {
        labels: clustering.labels(),
        weights: clustering
            .clusters()
            .iter()
            .map(|m| 1.0 / (m.len() as f64).sqrt())
            .collect(),
        clustering,
    })
}

impl ProjectionMatrix {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Reduced order.
    pub fn r(&self) -> usize {
        self.weights.len()
    }

    pub fn clustering(&self) -> &Clustering {
        &self.clustering
    }

    /// Cluster index of every node.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Column weights `1/sqrt(|C_j|)`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if self.labels[i] == j {
            self.weights[j]
        } else {
            0.0
        }
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n())
            .map(|i| (0..self.r()).map(|j| self.entry(i, j)).collect())
            .collect()
    }

    /// `xi = U^T x`.
    pub fn reduce_state(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n() {
            return Err(Error::shape(format!(
                "state has {} entries, projection expects {}",
                x.len(),
                self.n()
            )));
        }
        let mut xi = vec![0.0; self.r()];
        self.reduce_into(x, &mut xi);
        Ok(xi)
    }

    /// `x = U xi`.
    pub fn lift_state(&self, xi: &[f64]) -> Result<Vec<f64>> {
        if xi.len() != self.r() {
            return Err(Error::shape(format!(
                "reduced state has {} entries, expected {}",
                xi.len(),
                self.r()
            )));
        }
        let mut x = vec![0.0; self.n()];
        self.lift_into(xi, &mut x);
        Ok(x)
    }

    fn reduce_into(&self, x: &[f64], xi: &mut [f64]) {
        // Sum per cluster in node order, then scale once.
        xi.fill(0.0);
        for (v, &l) in x.iter().zip(&self.labels) {
            xi[l] += v;
        }
        for (s, w) in xi.iter_mut().zip(&self.weights) {
            *s *= w;
        }
    }

    fn lift_into(&self, xi: &[f64], x: &mut [f64]) {
        for (v, &l) in x.iter_mut().zip(&self.labels) {
            *v = self.weights[l] * xi[l];
        }
    }
}

/// Reduced dynamics `xi' = U^T f(U xi)` over a full field model.
#[derive(Debug, Clone)]
pub struct ReducedModel<'a> {
    full: &'a FieldModel,
    proj: ProjectionMatrix,
}

impl<'a> ReducedModel<'a> {
    pub fn new(full: &'a FieldModel, proj: ProjectionMatrix) -> Result<Self> {
        if proj.n() != full.grid().len() {
            return Err(Error::Consistency(format!(
                "projection is for {} nodes, field has {}",
                proj.n(),
                full.grid().len()
            )));
        }
        Ok(ReducedModel { full, proj })
    }

    pub fn full(&self) -> &FieldModel {
        self.full
    }

    pub fn projection(&self) -> &ProjectionMatrix {
        &self.proj
    }

    pub fn reduce_state(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.proj.reduce_state(x)
    }

    pub fn lift_state(&self, xi: &[f64]) -> Result<Vec<f64>> {
        self.proj.lift_state(xi)
    }

    pub fn reduced_rhs(
        &self,
        xi: &[f64],
        surface: &[f64],
        d: WeatherSample,
        t: f64,
    ) -> Result<Vec<f64>> {
        self.check(xi)?;
        if surface.len() != self.full.grid().layer_len() {
            return Err(Error::shape(format!(
                "surface input has {} entries",
                surface.len()
            )));
        }
        let mut out = vec![0.0; self.proj.r()];
        let mut ws = Workspace::new(self.proj.n());
        self.eval(xi, surface, d, t, &mut out, &mut ws)?;
        Ok(out)
    }

    pub fn reduced_step(
        &self,
        xi: &[f64],
        drivers: &Drivers,
        t: f64,
        dt: f64,
        ctrl: &StepControl,
    ) -> Result<Vec<f64>> {
        self.check(xi)?;
        let mut state = xi.to_vec();
        let mut ws = Workspace::new(self.proj.n());
        let mut ledger = MassLedger::default();
        advance(self, drivers, &mut state, t, dt, ctrl, &mut ws, &mut ledger)?;
        Ok(state)
    }

    /// Trajectory in reduced coordinates.
    pub fn simulate<F: Forcing + ?Sized>(
        &self,
        xi0: &[f64],
        forcing: &F,
        t0: f64,
        horizon: f64,
        dt_out: f64,
        ctrl: &StepControl,
    ) -> Result<Trajectory> {
        self.check(xi0)?;
        ctrl.validate()?;
        sample_run(self, forcing, xi0, t0, horizon, dt_out, ctrl)
    }

    /// Like [`ReducedModel::simulate`] but starting from and returning full-size states.
    pub fn simulate_lifted<F: Forcing + ?Sized>(
        &self,
        x0: &[f64],
        forcing: &F,
        t0: f64,
        horizon: f64,
        dt_out: f64,
        ctrl: &StepControl,
    ) -> Result<Trajectory> {
        let xi0 = self.reduce_state(x0)?;
        let mut tr = self.simulate(&xi0, forcing, t0, horizon, dt_out, ctrl)?;
        for s in &mut tr.states {
            *s = self.proj.lift_state(s)?;
        }
        Ok(tr)
    }

    fn check(&self, xi: &[f64]) -> Result<()> {
        if xi.len() != self.proj.r() {
            return Err(Error::shape(format!(
                "reduced state has {} entries, expected {}",
                xi.len(),
                self.proj.r()
            )));
        }
        Ok(())
    }
}

impl Dynamics for ReducedModel<'_> {
    fn dim(&self) -> usize {
        self.proj.r()
    }

    fn surface_len(&self) -> usize {
        self.full.grid().layer_len()
    }

    fn node_count(&self) -> usize {
        self.proj.n()
    }

    fn eval(
        &self,
        state: &[f64],
        surface: &[f64],
        weather: WeatherSample,
        t: f64,
        out: &mut [f64],
        ws: &mut Workspace,
    ) -> Result<EvalInfo> {
        let mut lifted = std::mem::take(&mut ws.lifted);
        let mut full_rate = std::mem::take(&mut ws.full_rate);
        self.proj.lift_into(state, &mut lifted);
        let res = self
            .full
            .eval_full(&lifted, surface, weather, t, &mut full_rate, ws);
        let info = match res {
            Ok(info) => {
                self.proj.reduce_into(&full_rate, out);
                // Sub-step control watches the head change of the lifted state.
                let max_rate = out
                    .iter()
                    .zip(&self.proj.weights)
                    .fold(0.0f64, |m, (r, w)| m.max((r * w).abs()));
                Ok(EvalInfo {
                    max_head_rate: max_rate,
                    ..info
                })
            }
            Err(e) => Err(e),
        };
        ws.lifted = lifted;
        ws.full_rate = full_rate;
        info
    }

    fn apply(&self, state: &mut [f64], rate: &[f64], dt: f64, ws: &mut Workspace) {
        // Update the lifted heads node by node with the cluster-mean rate,
        // then project back.
        let mut lifted = std::mem::take(&mut ws.lifted);
        let mut lifted_rate = std::mem::take(&mut ws.full_rate);
        self.proj.lift_into(rate, &mut lifted_rate);
        self.full
            .apply_conservative(&mut lifted, &lifted_rate, dt, ws);
        self.proj.reduce_into(&lifted, state);
        ws.lifted = lifted;
        ws.full_rate = lifted_rate;
    }
}

/// Mean over samples and nodes of the squared head difference (m²).
pub fn model_mse(full: &[Vec<f64>], reduced: &[Vec<f64>]) -> Result<f64> {
    if full.len() != reduced.len() || full.is_empty() {
        return Err(Error::shape(format!(
            "{} full samples vs {} reduced",
            full.len(),
            reduced.len()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (a, b) in full.iter().zip(reduced) {
        if a.len() != b.len() {
            return Err(Error::shape(format!(
                "state sizes {} and {} differ",
                a.len(),
                b.len()
            )));
        }
        sum += a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        count += a.len();
    }
    Ok(sum / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[f64]]) -> SnapshotMatrix {
        let n = rows[0].len();
        SnapshotMatrix::new(
            (0..n).map(|k| k as f64).collect(),
            rows.iter().map(|r| r.to_vec()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_rows_form_one_cluster() {
        let x = matrix(&[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]]);
        assert_eq!(cluster_states(&x, 1e-9).unwrap().len(), 1);
    }

    #[test]
    fn separated_groups() {
        let x = matrix(&[&[0.0], &[10.0], &[0.0], &[10.0]]);
        let c = cluster_states(&x, 5.0).unwrap();
        assert_eq!(c.clusters(), &[vec![0, 2], vec![1, 3]]);
    }

    #[test]
    fn points_on_a_line() {
        let x = matrix(&[&[0.0], &[1.0], &[10.0], &[11.0]]);
        let c = cluster_states(&x, 3.0).unwrap();
        assert_eq!(c.clusters(), &[vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn rejects_nonpositive_threshold() {
        let x = matrix(&[&[0.0], &[1.0]]);
        assert!(cluster_states(&x, 0.0).is_err());
    }

    #[test]
    fn single_cluster_projection() {
        let c = Clustering::new(vec![vec![0, 1, 2, 3]], 4, 1.0).unwrap();
        let u = build_projection(&c, 4).unwrap();
        assert_eq!(u.to_dense(), vec![vec![0.5]; 4]);
    }

    #[test]
    fn reduce_and_lift_by_hand() {
        let c = Clustering::new(vec![vec![0, 1, 2]], 3, 1.0).unwrap();
        let u = build_projection(&c, 3).unwrap();
        let xi = u.reduce_state(&[1.0, 2.0, 3.0]).unwrap();
        assert!((xi[0] - 6.0 / 3f64.sqrt()).abs() < 1e-14);
        let x = u.lift_state(&xi).unwrap();
        for v in x {
            assert!((v - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn singletons_permute_identity() {
        let c = Clustering::new(vec![vec![2], vec![0], vec![1]], 3, 0.1).unwrap();
        let u = build_projection(&c, 3).unwrap();
        let x = [-1.5, 0.25, 3.0];
        assert_eq!(u.lift_state(&u.reduce_state(&x).unwrap()).unwrap(), x);
    }

    #[test]
    fn invalid_partitions() {
        assert!(Clustering::new(vec![vec![0, 1], vec![1, 2]], 3, 1.0).is_err());
        assert!(Clustering::new(vec![vec![0, 1]], 3, 1.0).is_err());
        assert!(Clustering::new(vec![vec![0, 1, 2], vec![]], 3, 1.0).is_err());
        assert!(Clustering::new(vec![vec![0, 3]], 2, 1.0).is_err());
    }

    #[test]
    fn cluster_map_round_trip() {
        let c = Clustering::new(vec![vec![0, 3], vec![1], vec![2, 4]], 5, 0.7).unwrap();
        let back = Clustering::parse(&c.to_csv(), "t").unwrap();
        assert_eq!(back, c);
        assert!(matches!(
            Clustering::parse("node,cluster\n0,0\n", "t"),
            Err(Error::Schema { .. })
        ));
        assert!(matches!(
            Clustering::parse("node_id,cluster_id\n0,0\n1,x\n", "t"),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn mse_of_offset() {
        let a = vec![vec![0.0, 1.0], vec![2.0, 3.0]];
        let b: Vec<Vec<f64>> = a
            .iter()
            .map(|r| r.iter().map(|v| v + 0.3).collect())
            .collect();
        assert!((model_mse(&a, &b).unwrap() - 0.09).abs() < 1e-15);
        assert_eq!(model_mse(&a, &a).unwrap(), 0.0);
        assert!(model_mse(&a, &b[..1]).is_err());
    }
}
