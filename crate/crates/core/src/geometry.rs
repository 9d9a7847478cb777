//! Parametric hyperbolic-paraboloid cable net.
//!
//! Boundary nodes sit where the elliptic cylinder x²/Rx² + y²/Ry² = 1 meets
//! the saddle z = y²/b² − x²/a². One ring of `p` free nodes, scaled by `c`
//! in plan, carries the hoop cable. Each of the `q` diagonal cables ties
//! every boundary node to the hoop. The innermost family runs radially from
//! boundary node `k` to hoop node `k`; each family further out ends `skew`
//! hoop nodes further round. Every hoop node meets `q` diagonals and two
//! hoop segments, which span space and leave no sliding mechanism.
//!
//! Node numbering: boundary nodes `0..p` counterclockwise from θ = 0, then
//! hoop nodes `p..2p`. Members are ordered family by family followed by the
//! hoop segments.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Cluster, Configuration, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleSpacing {
    /// Uniform in the ellipse parameter θ.
    #[default]
    Parametric,
    /// Uniform in arc length along the ellipse.
    Arclength,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CableNetParams {
    pub p: usize,
    pub q: usize,
    pub rx: f64,
    pub ry: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    #[serde(default)]
    pub angle_spacing: AngleSpacing,
    /// Boundary steps between the hoop ends of successive diagonal families.
    #[serde(default = "default_skew")]
    pub skew: usize,
}

fn default_skew() -> usize {
    1
}

impl CableNetParams {
    pub fn validate(&self) -> Result<()> {
        if self.p < 3 {
            return Err(Error::param("params.p", "must be >= 3"));
        }
        if self.q < 1 {
            return Err(Error::param("params.q", "must be >= 1"));
        }
        if self.q > 1 && (self.skew == 0 || (self.q - 1) * self.skew >= self.p) {
            return Err(Error::param(
                "params.skew",
                "diagonal families must end on distinct hoop nodes: need 1 <= skew and (q-1)*skew < p",
            ));
        }
        for (field, v) in [("rx", self.rx), ("ry", self.ry), ("a", self.a), ("b", self.b)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(format!("params.{field}"), "must be > 0"));
            }
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(Error::param("params.c", "must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Height of the saddle surface at (x, y).
    pub fn surface_z(&self, x: f64, y: f64) -> f64 {
        y * y / (self.b * self.b) - x * x / (self.a * self.a)
    }

    /// Vertical distance between the highest and lowest boundary points.
    pub fn vertical_span(&self) -> f64 {
        self.ry * self.ry / (self.b * self.b) + self.rx * self.rx / (self.a * self.a)
    }

    fn angles(&self) -> Vec<f64> {
        let p = self.p;
        match self.angle_spacing {
            AngleSpacing::Parametric => (0..p).map(|k| 2.0 * PI * k as f64 / p as f64).collect(),
            AngleSpacing::Arclength => arclength_angles(self.rx, self.ry, p),
        }
    }
}

/// Parameter angles that split the ellipse into `p` arcs of equal length.
fn arclength_angles(rx: f64, ry: f64, p: usize) -> Vec<f64> {
    const SAMPLES: usize = 1 << 14;
    let speed = |t: f64| (rx * rx * t.sin().powi(2) + ry * ry * t.cos().powi(2)).sqrt();
    let h = 2.0 * PI / SAMPLES as f64;
    let mut cumulative = Vec::with_capacity(SAMPLES + 1);
    cumulative.push(0.0);
    let mut s = 0.0;
    for i in 0..SAMPLES {
        let t0 = i as f64 * h;
        // Simpson on each panel
        s += h / 6.0 * (speed(t0) + 4.0 * speed(t0 + 0.5 * h) + speed(t0 + h));
        cumulative.push(s);
    }
    let total = s;
    let mut out = Vec::with_capacity(p);
    let mut j = 0;
    for k in 0..p {
        let target = total * k as f64 / p as f64;
        while j + 1 < cumulative.len() && cumulative[j + 1] < target {
            j += 1;
        }
        if k == 0 {
            out.push(0.0);
            continue;
        }
        let (s0, s1) = (cumulative[j], cumulative[j + 1]);
        let frac = if s1 > s0 { (target - s0) / (s1 - s0) } else { 0.0 };
        out.push((j as f64 + frac) * h);
    }
    out
}

/// `p` boundary points on the ellipse, lifted onto the saddle.
pub fn boundary_nodes(params: &CableNetParams) -> Result<Vec<[f64; 3]>> {
    params.validate()?;
    Ok(params
        .angles()
        .into_iter()
        .map(|t| {
            let x = params.rx * t.cos();
            let y = params.ry * t.sin();
            [x, y, params.surface_z(x, y)]
        })
        .collect())
}

/// Hoop nodes: boundary XY scaled by `c` with z re-evaluated on the surface.
pub fn hoop_nodes(params: &CableNetParams) -> Result<Vec<[f64; 3]>> {
    let s = params.c;
    Ok(boundary_nodes(params)?
        .into_iter()
        .map(|[x, y, _]| {
            let (x, y) = (s * x, s * y);
            [x, y, params.surface_z(x, y)]
        })
        .collect())
}

/// Cluster names for a net with `q` diagonal levels.
pub fn cluster_names(q: usize) -> Vec<String> {
    let mut names: Vec<String> = match q {
        1 => vec!["DC".into()],
        2 => vec!["ODC".into(), "IDC".into()],
        _ => (1..=q).map(|r| format!("DC{r}")).collect(),
    };
    names.push("HC".into());
    names
}

pub fn build_topology(params: &CableNetParams) -> Result<(Topology, Configuration)> {
    params.validate()?;
    let (p, q) = (params.p, params.q);
    let mut points = boundary_nodes(params)?;
    points.extend(hoop_nodes(params)?);
    let mut members = Vec::with_capacity(p * (q + 1));
    let mut clusters: Vec<Cluster> = cluster_names(q)
        .into_iter()
        .map(|name| Cluster {
            name,
            members: Vec::with_capacity(p),
        })
        .collect();
    for (r, cluster) in clusters.iter_mut().take(q).enumerate() {
        for k in 0..p {
            cluster.members.push(members.len());
            members.push((k, p + (k + (q - 1 - r) * params.skew) % p));
        }
    }
    for k in 0..p {
        clusters[q].members.push(members.len());
        members.push((p + k, p + (k + 1) % p));
    }
    let fixed: Vec<usize> = (0..p).collect();
    let topology = Topology::new(2 * p, members, clusters, &fixed)?;
    Ok((topology, Configuration::from_points(&points)))
}
