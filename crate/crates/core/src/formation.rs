//! Agent network and the quadratic formation potential
//! `φ(x) = φ* + L_f Σ_i Σ_{j∈N(i)} ‖x_i − x_j − x̂_ij‖²`.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::gradestim::worst_case_error_bound;

/// Directed neighbour lists: `neighbours(i)` is `N(i)`, the agents `i` hears from.
#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    neighbours: Vec<Vec<usize>>,
}

impl Topology {
    /// Builds from `(j, i)` pairs meaning `j ∈ N(i)`.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut neighbours = vec![Vec::new(); n];
        for &(j, i) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidFormation(format!(
                    "edge ({j} -> {i}) references agent outside 0..{n}"
                )));
            }
            if i == j {
                return Err(Error::InvalidFormation(format!("self loop at agent {i}")));
            }
            if !neighbours[i].contains(&j) {
                neighbours[i].push(j);
            }
        }
        Ok(Self { neighbours })
    }

    pub fn from_neighbour_lists(neighbours: Vec<Vec<usize>>) -> Result<Self> {
        let n = neighbours.len();
        let edges: Vec<(usize, usize)> = neighbours
            .iter()
            .enumerate()
            .flat_map(|(i, ns)| ns.iter().map(move |&j| (j, i)))
            .collect();
        Self::from_edges(n, &edges)
    }

    pub fn len(&self) -> usize {
        self.neighbours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbours.is_empty()
    }

    pub fn neighbours(&self, i: usize) -> &[usize] {
        &self.neighbours[i]
    }

    /// `(i, j)` for every `j ∈ N(i)`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbours
            .iter()
            .enumerate()
            .flat_map(|(i, ns)| ns.iter().map(move |&j| (i, j)))
    }

    pub fn is_symmetric(&self) -> bool {
        self.edges().all(|(i, j)| self.neighbours[j].contains(&i))
    }

    /// Connectivity of the undirected support graph.
    pub fn is_connected(&self) -> bool {
        let n = self.len();
        if n == 0 {
            return false;
        }
        let mut adj = vec![Vec::new(); n];
        for (i, j) in self.edges() {
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &w in &adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Formation: topology, ideal displacements `x̂_ij` (desired `x_i − x_j`),
/// and the potential offset `φ*` together with the error-domination constant `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct FormationSpec {
    topology: Topology,
    dim: usize,
    displacements: BTreeMap<(usize, usize), DVector<f64>>,
    ideal: Vec<DVector<f64>>,
    pub phi_star: f64,
    pub c_const: f64,
}

const REALIZABILITY_TOLERANCE: f64 = 1e-9;

impl FormationSpec {
    /// `displacements[(i, j)] = x̂_ij` for each `j ∈ N(i)`.
    ///
    /// Rejects one-sided edges, non-antisymmetric displacements, disconnected
    /// graphs and displacement sets no configuration can realise.
    pub fn new(topology: Topology, dim: usize, displacements: BTreeMap<(usize, usize), DVector<f64>>) -> Result<Self> {
        let problems = Self::violations(&topology, dim, &displacements);
        if !problems.is_empty() {
            if !topology.is_connected() && problems.len() == 1 {
                return Err(Error::Disconnected);
            }
            return Err(Error::InvalidFormation(problems.join("; ")));
        }
        let ideal = realize(&topology, dim, &displacements)?;
        Ok(Self {
            topology,
            dim,
            displacements,
            ideal,
            phi_star: 0.0,
            c_const: 0.0,
        })
    }

    fn violations(
        topology: &Topology,
        dim: usize,
        displacements: &BTreeMap<(usize, usize), DVector<f64>>,
    ) -> Vec<String> {
        let mut out = Vec::new();
        if dim == 0 {
            out.push("dimension must be at least 1".into());
        }
        if !topology.is_connected() {
            out.push("communication graph is not connected".into());
        }
        for (i, j) in topology.edges() {
            if !topology.neighbours(j).contains(&i) {
                out.push(format!("edge {j} -> {i} has no reverse edge {i} -> {j}"));
            }
            match (displacements.get(&(i, j)), displacements.get(&(j, i))) {
                (None, _) => out.push(format!("missing displacement for ({i}, {j})")),
                (Some(d), _) if d.len() != dim => out.push(format!(
                    "displacement ({i}, {j}) has length {}, expected {dim}",
                    d.len()
                )),
                (Some(a), Some(b)) if a.len() == b.len() && (a + b).amax() > 1e-12 * (1.0 + a.amax()) => {
                    out.push(format!("displacements ({i}, {j}) and ({j}, {i}) are not antisymmetric"))
                }
                _ => {}
            }
        }
        for &(i, j) in displacements.keys() {
            if i >= topology.len() || !topology.neighbours(i).contains(&j) {
                out.push(format!("displacement ({i}, {j}) does not correspond to an edge"));
            }
        }
        out
    }

    /// Builds a formation from ideal positions, taking `x̂_ij = p_i − p_j`.
    pub fn from_positions(topology: Topology, positions: &[DVector<f64>]) -> Result<Self> {
        if positions.len() != topology.len() {
            return Err(Error::DimensionMismatch {
                expected: topology.len(),
                found: positions.len(),
            });
        }
        let dim = positions.first().map_or(0, |p| p.len());
        let displacements = topology
            .edges()
            .map(|(i, j)| ((i, j), &positions[i] - &positions[j]))
            .collect();
        Self::new(topology, dim, displacements)
    }

    pub fn with_constants(mut self, phi_star: f64, c_const: f64) -> Self {
        self.phi_star = phi_star;
        self.c_const = c_const;
        self
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn len(&self) -> usize {
        self.topology.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topology.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn neighbours(&self, i: usize) -> &[usize] {
        self.topology.neighbours(i)
    }

    pub fn displacement(&self, i: usize, j: usize) -> &DVector<f64> {
        &self.displacements[&(i, j)]
    }

    pub fn displacements(&self) -> &BTreeMap<(usize, usize), DVector<f64>> {
        &self.displacements
    }

    /// Ideal positions with the centroid at the origin.
    pub fn ideal_positions(&self) -> &[DVector<f64>] {
        &self.ideal
    }

    /// Ideal formation translated so its centroid sits at `centroid`.
    pub fn placed_at(&self, centroid: &DVector<f64>) -> Vec<DVector<f64>> {
        self.ideal.iter().map(|p| p + centroid).collect()
    }

    fn check_state(&self, x: &[DVector<f64>]) -> Result<()> {
        if x.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: x.len(),
            });
        }
        if let Some(bad) = x.iter().find(|p| p.len() != self.dim) {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: bad.len(),
            });
        }
        Ok(())
    }

    pub fn potential(&self, x: &[DVector<f64>], lf: f64) -> Result<f64> {
        self.check_state(x)?;
        let sum: f64 = self
            .topology
            .edges()
            .map(|(i, j)| (&x[i] - &x[j] - self.displacement(i, j)).norm_squared())
            .sum();
        Ok(self.phi_star + lf * sum)
    }

    /// `∇_{x_i} φ = 4 L_f Σ_{j∈N(i)} (x_i − x_j − x̂_ij)`, reading only
    /// agent `i` and its neighbours through `position`.
    pub fn local_gradient<'a, F>(&self, i: usize, lf: f64, position: F) -> DVector<f64>
    where
        F: Fn(usize) -> &'a DVector<f64>,
    {
        let xi = position(i);
        let mut g = DVector::zeros(self.dim);
        for &j in self.neighbours(i) {
            g += xi - position(j) - self.displacement(i, j);
        }
        g * (4.0 * lf)
    }

    pub fn gradient_component(&self, x: &[DVector<f64>], i: usize, lf: f64) -> Result<DVector<f64>> {
        self.check_state(x)?;
        if i >= self.len() {
            return Err(Error::InvalidParameter(format!("agent {i} out of range")));
        }
        Ok(self.local_gradient(i, lf, |j| &x[j]))
    }

    pub fn gradient(&self, x: &[DVector<f64>], lf: f64) -> Result<Vec<DVector<f64>>> {
        self.check_state(x)?;
        Ok((0..self.len()).map(|i| self.local_gradient(i, lf, |j| &x[j])).collect())
    }

    /// Scalar `n×n` Hessian factor `H` with `∇²φ = H ⊗ I_d`.
    pub fn hessian_factor(&self, lf: f64) -> DMatrix<f64> {
        let n = self.len();
        let mut h = DMatrix::zeros(n, n);
        for (i, j) in self.topology.edges() {
            let w = 2.0 * lf;
            h[(i, i)] += w;
            h[(j, j)] += w;
            h[(i, j)] -= w;
            h[(j, i)] -= w;
        }
        h
    }

    /// `(L_φ, μ_φ)`: largest eigenvalue of the Hessian, and its smallest
    /// eigenvalue orthogonal to common translations.
    pub fn lipschitz_pl_constants(&self, lf: f64) -> Result<(f64, f64)> {
        let h = self.hessian_factor(lf);
        let mut eig: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        let max = *eig.last().unwrap_or(&0.0);
        let zero_tol = 1e-9 * max.abs().max(f64::MIN_POSITIVE);
        let zeros = eig.iter().filter(|&&e| e.abs() <= zero_tol).count();
        if zeros != 1 || self.len() < 2 {
            return Err(Error::Disconnected);
        }
        Ok((max, eig[1]))
    }

    /// Worst-case gradient-error bound of each agent at the ideal geometry.
    pub fn ideal_error_bounds(&self, lf: f64, positions: &[DVector<f64>]) -> Result<Vec<f64>> {
        self.check_state(positions)?;
        (0..self.len())
            .map(|i| {
                let nbrs: Vec<DVector<f64>> = self.neighbours(i).iter().map(|&j| positions[j].clone()).collect();
                worst_case_error_bound(&positions[i], &nbrs, lf)
            })
            .collect()
    }

    /// `φ* = (c/2)·n·B²` with `B` the largest per-agent error bound at the
    /// ideal geometry, so the potential dominates `(c/2)Σ‖ε_i‖²` in formation.
    pub fn phi_star_from_error_bound(&self, lf: f64, c_const: f64, positions: &[DVector<f64>]) -> Result<f64> {
        let worst = self.ideal_error_bounds(lf, positions)?.into_iter().fold(0.0, f64::max);
        Ok(phi_star_for_bound(c_const, self.len(), worst))
    }

    /// Sum of squared offsets of the ideal positions from their centroid:
    /// the squared distance between the all-at-one-point configuration and
    /// the nearest translate of the formation.
    pub fn spread_squared(&self) -> f64 {
        self.ideal.iter().map(|p| p.norm_squared()).sum()
    }
}

pub fn phi_star_for_bound(c_const: f64, agents: usize, bound: f64) -> f64 {
    0.5 * c_const * agents as f64 * bound * bound
}

fn realize(
    topology: &Topology,
    dim: usize,
    displacements: &BTreeMap<(usize, usize), DVector<f64>>,
) -> Result<Vec<DVector<f64>>> {
    let n = topology.len();
    let mut pos: Vec<Option<DVector<f64>>> = vec![None; n];
    pos[0] = Some(DVector::zeros(dim));
    let mut queue = VecDeque::from([0]);
    while let Some(i) = queue.pop_front() {
        let pi = pos[i].clone().expect("visited");
        for &j in topology.neighbours(i) {
            if pos[j].is_none() {
                pos[j] = Some(&pi - &displacements[&(i, j)]);
                queue.push_back(j);
            }
        }
    }
    let mut pos: Vec<DVector<f64>> = pos
        .into_iter()
        .map(|p| p.ok_or(Error::Disconnected))
        .collect::<Result<_>>()?;
    let scale = 1.0 + displacements.values().map(|d| d.amax()).fold(0.0, f64::max);
    for (i, j) in topology.edges() {
        let residual = (&pos[i] - &pos[j] - &displacements[&(i, j)]).amax();
        if residual > REALIZABILITY_TOLERANCE * scale {
            return Err(Error::InvalidFormation(format!(
                "displacements are not realisable (residual {residual:e} on edge ({i}, {j}))"
            )));
        }
    }
    let centroid = pos.iter().fold(DVector::zeros(dim), |acc, p| acc + p) / n as f64;
    for p in &mut pos {
        *p -= &centroid;
    }
    Ok(pos)
}

/// Six agents on a regular hexagon with circumradius (= side) `scale`,
/// each listening to its two adjacent vertices.
pub fn make_hexagon(scale: f64) -> Result<FormationSpec> {
    if !(scale > 0.0) {
        return Err(Error::InvalidParameter("formation scale must be positive".into()));
    }
    let n = 6;
    let positions: Vec<DVector<f64>> = (0..n)
        .map(|i| {
            let theta = std::f64::consts::TAU * i as f64 / n as f64;
            DVector::from_vec(vec![scale * theta.cos(), scale * theta.sin()])
        })
        .collect();
    let topo = Topology::from_neighbour_lists((0..n).map(|i| vec![(i + 1) % n, (i + n - 1) % n]).collect())?;
    FormationSpec::from_positions(topo, &positions)
}

/// Six agents on a 2×3 grid with spacing `scale`, grid-adjacent neighbours.
///
/// Agent `3r + c` sits at column `c`, row `r`.
pub fn make_rectangle(scale: f64) -> Result<FormationSpec> {
    if !(scale > 0.0) {
        return Err(Error::InvalidParameter("formation scale must be positive".into()));
    }
    let (rows, cols) = (2usize, 3usize);
    let mut positions = Vec::new();
    let mut lists = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            positions.push(DVector::from_vec(vec![scale * c as f64, scale * r as f64]));
            let mut ns = Vec::new();
            if c + 1 < cols {
                ns.push(r * cols + c + 1);
            }
            if c > 0 {
                ns.push(r * cols + c - 1);
            }
            if r + 1 < rows {
                ns.push((r + 1) * cols + c);
            }
            if r > 0 {
                ns.push((r - 1) * cols + c);
            }
            lists.push(ns);
        }
    }
    FormationSpec::from_positions(Topology::from_neighbour_lists(lists)?, &positions)
}
