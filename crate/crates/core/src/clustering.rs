//! Representatives and bundles, black components, groups, concentration flags,
//! and the partitions consumed by the rounding stage.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::relaxation::{Derived, FractionalSolution};

const TOL: f64 = 1e-9;
const STAGE: &str = "clustering";

/// Constants standing in for the asymptotic bounds of the forest lemmas.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Surrogates {
    /// `d(J, parent) ≤ grey_edge · ℓ · L(J)`.
    pub grey_edge: f64,
    /// Distance from a group member to its parent group `≤ group_distance · ℓ² · L(J)`.
    pub group_distance: f64,
    /// Number of child groups `≤ group_children · ℓ`.
    pub group_children: f64,
}

impl Default for Surrogates {
    fn default() -> Self {
        Surrogates {
            grey_edge: 8.0,
            group_distance: 32.0,
            group_children: 8.0,
        }
    }
}

/// Representatives `R` (client indices, ascending), their bundles and demands.
#[derive(Clone, Debug)]
pub struct Representatives {
    pub reps: Vec<usize>,
    /// Position in `reps` of the bundle containing each facility.
    pub bundle_of: Vec<usize>,
    pub bundles: Vec<Vec<usize>>,
    /// `α_v = x_{U_v,C}`.
    pub alpha: Vec<f64>,
    /// `y_{U_v}`.
    pub weight: Vec<f64>,
}

/// Greedy selection by smallest `d_av` (ties by client index), then Voronoi
/// bundles (ties to the smaller representative).
pub fn select_representatives(inst: &Instance, fs: &FractionalSolution, der: &Derived) -> Representatives {
    let nc = inst.nc();
    let mut alive = vec![true; nc];
    let mut reps = Vec::new();
    loop {
        let pick = (0..nc)
            .filter(|&j| alive[j])
            .min_by(|&a, &b| der.d_av[a].partial_cmp(&der.d_av[b]).unwrap().then(a.cmp(&b)));
        let Some(v) = pick else { break };
        reps.push(v);
        for j in 0..nc {
            if alive[j] && inst.cc(j, v) <= 4.0 * der.d_av[j] {
                alive[j] = false;
            }
        }
        alive[v] = false;
    }
    reps.sort_unstable();
    let mut bundle_of = vec![0; inst.nf()];
    let mut bundles = vec![Vec::new(); reps.len()];
    for i in 0..inst.nf() {
        let mut best = 0;
        for p in 1..reps.len() {
            if inst.fc(i, reps[p]) < inst.fc(i, reps[best]) {
                best = p;
            }
        }
        bundle_of[i] = best;
        bundles[best].push(i);
    }
    let alpha = bundles.iter().map(|b| fs.x_set(b)).collect();
    let weight = bundles.iter().map(|b| fs.y_set(b)).collect();
    Representatives {
        reps,
        bundle_of,
        bundles,
        alpha,
        weight,
    }
}

fn scale(inst: &Instance) -> f64 {
    1.0 + inst.metric().iter().fold(0.0f64, |m, v| m.max(*v))
}

/// Checks the representative properties and the demand-moving bounds.
pub fn check_representatives(inst: &Instance, fs: &FractionalSolution, der: &Derived, r: &Representatives) -> Result<()> {
    let tol = TOL * scale(inst);
    let reps = &r.reps;
    for (a, &v) in reps.iter().enumerate() {
        for &w in &reps[a + 1..] {
            let bound = 4.0 * der.d_av[v].max(der.d_av[w]);
            if inst.cc(v, w) <= bound - tol {
                return Err(Error::invariant(STAGE, format!("representatives {v} and {w} too close")));
            }
        }
    }
    for j in 0..inst.nc() {
        let ok = reps
            .iter()
            .any(|&v| der.d_av[v] <= der.d_av[j] + tol && inst.cc(v, j) <= 4.0 * der.d_av[j] + tol);
        if !ok {
            return Err(Error::invariant(STAGE, format!("client {j} has no nearby representative")));
        }
    }
    for (p, &v) in reps.iter().enumerate() {
        if r.weight[p] < 0.5 - 1e-7 {
            return Err(Error::invariant(STAGE, format!("bundle of {v} has weight {}", r.weight[p])));
        }
        let mut moved = 0.0;
        for &i in &r.bundles[p] {
            for j in 0..inst.nc() {
                if inst.fc(i, v) > inst.fc(i, j) + 4.0 * der.d_av[j] + tol {
                    return Err(Error::invariant(STAGE, format!("facility {i} far from representative {v}")));
                }
            }
            moved += fs.load(i) * inst.fc(i, v);
        }
        if moved > 4.0 * der.d_set(&r.bundles[p]) + 1e-7 * (1.0 + moved) {
            return Err(Error::invariant(STAGE, format!("moving bound fails at representative {v}")));
        }
    }
    let total: f64 = (0..reps.len())
        .map(|p| r.bundles[p].iter().map(|&i| fs.load(i) * inst.fc(i, reps[p])).sum::<f64>())
        .sum();
    if total > 8.0 * der.lp_value + 1e-7 * (1.0 + total) {
        return Err(Error::invariant(STAGE, "total moving cost exceeds 8 LP"));
    }
    let alpha: f64 = r.alpha.iter().sum();
    if (alpha - inst.nc() as f64).abs() > 1e-6 {
        return Err(Error::invariant(STAGE, format!("total demand {alpha} != |C|")));
    }
    Ok(())
}

/// A black component with its position in the binary forest.
#[derive(Clone, Debug)]
pub struct Component {
    /// Positions into `Representatives::reps`, ascending.
    pub reps: Vec<usize>,
    pub facilities: Vec<usize>,
    /// `y_{U(J)}`.
    pub weight: f64,
    /// `L(J) = d(J, R∖J)`; infinite when `J = R`.
    pub l: f64,
    /// Parent in the binary forest.
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Parent before binarization.
    pub tree_parent: Option<usize>,
    /// Black edges inside the component, as representative positions.
    pub black_edges: Vec<(usize, usize)>,
}

struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu { parent: (0..n).collect() }
    }

    fn find(&mut self, a: usize) -> usize {
        let mut r = a;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut c = a;
        while self.parent[c] != r {
            let n = self.parent[c];
            self.parent[c] = r;
            c = n;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) -> usize {
        let (ra, rb) = (self.find(a), self.find(b));
        let (lo, hi) = (ra.min(rb), ra.max(rb));
        self.parent[hi] = lo;
        lo
    }
}

fn rep_distance(inst: &Instance, r: &Representatives, a: usize, b: usize) -> f64 {
    inst.cc(r.reps[a], r.reps[b])
}

fn set_distance(inst: &Instance, r: &Representatives, a: &[usize], b: &[usize]) -> f64 {
    let mut best = f64::INFINITY;
    for &p in a {
        for &q in b {
            best = best.min(rep_distance(inst, r, p, q));
        }
    }
    best
}

/// Kruskal over the representatives with black/grey/white coloring, then the
/// left-child right-sibling binarization of the grey-edge forest.
pub fn build_black_components(inst: &Instance, r: &Representatives, l: f64) -> Vec<Component> {
    let m = r.reps.len();
    let mut edges: Vec<(f64, usize, usize)> = Vec::with_capacity(m * m / 2);
    for p in 0..m {
        for q in p + 1..m {
            edges.push((rep_distance(inst, r, p, q), p, q));
        }
    }
    edges.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut part = Dsu::new(m);
    let mut part_weight = r.weight.clone();
    let mut black = Dsu::new(m);
    let mut black_edges = Vec::new();
    let mut grey = Vec::new();
    let small = |w: f64| w < l - TOL;
    for &(_, p, q) in &edges {
        let (a, b) = (part.find(p), part.find(q));
        if a == b {
            continue;
        }
        let (wa, wb) = (part_weight[a], part_weight[b]);
        match (small(wa), small(wb)) {
            (true, true) => {
                black.union(p, q);
                black_edges.push((p, q));
            }
            (true, false) => grey.push((p, q)),
            (false, true) => grey.push((q, p)),
            (false, false) => {}
        }
        let root = part.union(a, b);
        part_weight[root] = wa + wb;
    }
    let mut comp_of = vec![usize::MAX; m];
    let mut comps: Vec<Component> = Vec::new();
    for p in 0..m {
        let root = black.find(p);
        if comp_of[root] == usize::MAX {
            comp_of[root] = comps.len();
            comps.push(Component {
                reps: Vec::new(),
                facilities: Vec::new(),
                weight: 0.0,
                l: f64::INFINITY,
                parent: None,
                children: Vec::new(),
                tree_parent: None,
                black_edges: Vec::new(),
            });
        }
        let c = comp_of[root];
        comp_of[p] = c;
        comps[c].reps.push(p);
        comps[c].facilities.extend(r.bundles[p].iter().copied());
        comps[c].weight += r.weight[p];
    }
    for c in comps.iter_mut() {
        c.facilities.sort_unstable();
    }
    for (p, q) in black_edges {
        comps[comp_of[p]].black_edges.push((p, q));
    }
    for c in 0..comps.len() {
        let inside: Vec<bool> = (0..m).map(|p| comp_of[p] == c).collect();
        let mut best = f64::INFINITY;
        for &p in &comps[c].reps {
            for q in 0..m {
                if !inside[q] {
                    best = best.min(rep_distance(inst, r, p, q));
                }
            }
        }
        comps[c].l = best;
    }
    for (tail, head) in grey {
        let c = comp_of[tail];
        comps[c].tree_parent = Some(comp_of[head]);
    }
    let n = comps.len();
    let mut kids: Vec<Vec<usize>> = vec![Vec::new(); n];
    for c in 0..n {
        if let Some(p) = comps[c].tree_parent {
            kids[p].push(c);
        }
    }
    for (p, list) in kids.iter_mut().enumerate() {
        list.sort_by(|&a, &b| comps[a].l.partial_cmp(&comps[b].l).unwrap().then(a.cmp(&b)));
        let mut prev = p;
        for &c in list.iter() {
            comps[c].parent = Some(prev);
            prev = c;
        }
    }
    for c in 0..n {
        if let Some(p) = comps[c].parent {
            comps[p].children.push(c);
        }
    }
    comps
}

/// Checks the six forest properties; the single component covering all of `R`
/// with weight below `ℓ` is the only root allowed to be small.
pub fn check_components(inst: &Instance, r: &Representatives, comps: &[Component], l: f64, s: &Surrogates) -> Result<()> {
    let tol = TOL * scale(inst);
    for (c, comp) in comps.iter().enumerate() {
        if comp.black_edges.len() + 1 != comp.reps.len() {
            return Err(Error::invariant(STAGE, format!("component {c} black edges do not span it")));
        }
        for &(p, q) in &comp.black_edges {
            if rep_distance(inst, r, p, q) > comp.l + tol {
                return Err(Error::invariant(STAGE, format!("component {c} has a black edge longer than L")));
            }
        }
        match comp.parent {
            None => {
                let whole = comp.reps.len() == r.reps.len();
                if comp.weight < l - TOL && !whole {
                    return Err(Error::invariant(STAGE, format!("root component {c} is small")));
                }
                if comp.weight >= 2.0 * l - TOL && comp.reps.len() != 1 {
                    return Err(Error::invariant(STAGE, format!("root component {c} too heavy")));
                }
            }
            Some(p) => {
                if comp.weight >= l - TOL {
                    return Err(Error::invariant(STAGE, format!("non-root component {c} is big")));
                }
                if comp.l < comps[p].l - tol {
                    return Err(Error::invariant(STAGE, format!("component {c} has L below its parent")));
                }
                let d = set_distance(inst, r, &comp.reps, &comps[p].reps);
                if d > s.grey_edge * l * comp.l + tol {
                    return Err(Error::invariant(STAGE, format!("component {c} far from its parent")));
                }
            }
        }
        if comp.children.len() > 2 {
            return Err(Error::invariant(STAGE, format!("component {c} has {} children", comp.children.len())));
        }
    }
    Ok(())
}

/// A group of black components.
#[derive(Clone, Debug)]
pub struct Group {
    /// Component ids; the first is the top of the group.
    pub components: Vec<usize>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub weight: f64,
}

/// Greedy growth from each subtree root by smallest `L` until weight `ℓ` is
/// reached. Groups are numbered in top-down (breadth-first) order.
pub fn build_groups(comps: &[Component], l: f64) -> (Vec<Group>, Vec<usize>) {
    let mut groups: Vec<Group> = Vec::new();
    let mut group_of = vec![usize::MAX; comps.len()];
    let mut queue: std::collections::VecDeque<(usize, Option<usize>)> =
        (0..comps.len()).filter(|&c| comps[c].parent.is_none()).map(|c| (c, None)).collect();
    while let Some((top, parent)) = queue.pop_front() {
        let g = groups.len();
        let mut members = vec![top];
        let mut weight = comps[top].weight;
        group_of[top] = g;
        let mut frontier: Vec<usize> = comps[top].children.clone();
        while weight < l - TOL && !frontier.is_empty() {
            let (pos, _) = frontier
                .iter()
                .enumerate()
                .min_by(|a, b| comps[*a.1].l.partial_cmp(&comps[*b.1].l).unwrap().then(a.1.cmp(b.1)))
                .unwrap();
            let c = frontier.swap_remove(pos);
            members.push(c);
            group_of[c] = g;
            weight += comps[c].weight;
            frontier.extend(comps[c].children.iter().copied());
        }
        frontier.sort_unstable();
        for c in frontier {
            queue.push_back((c, Some(g)));
        }
        groups.push(Group {
            components: members,
            parent,
            children: Vec::new(),
            weight,
        });
        if let Some(p) = parent {
            groups[p].children.push(g);
        }
    }
    (groups, group_of)
}

/// Checks the five group properties with the recorded surrogate constants.
pub fn check_groups(inst: &Instance, r: &Representatives, comps: &[Component], groups: &[Group], l: f64, s: &Surrogates) -> Result<()> {
    let tol = TOL * scale(inst);
    for (g, group) in groups.iter().enumerate() {
        match group.parent {
            None => {
                if group.components.len() != 1 || comps[group.components[0]].parent.is_some() {
                    return Err(Error::invariant(STAGE, format!("root group {g} is not a single root component")));
                }
            }
            Some(pg) => {
                if group.weight >= 2.0 * l - TOL {
                    return Err(Error::invariant(STAGE, format!("non-root group {g} weighs {}", group.weight)));
                }
                let parent_reps: Vec<usize> = groups[pg]
                    .components
                    .iter()
                    .flat_map(|&c| comps[c].reps.iter().copied())
                    .collect();
                for &c in &group.components {
                    for &v in &comps[c].reps {
                        for &w in &parent_reps {
                            let d = rep_distance(inst, r, v, w);
                            if d > s.group_distance * l * l * comps[c].l + tol {
                                return Err(Error::invariant(STAGE, format!("group {g} far from its parent group")));
                            }
                        }
                    }
                }
            }
        }
        if !group.children.is_empty() && group.weight < l - TOL {
            return Err(Error::invariant(STAGE, format!("non-leaf group {g} weighs {}", group.weight)));
        }
        if group.children.len() as f64 > s.group_children * l {
            return Err(Error::invariant(STAGE, format!("group {g} has {} children", group.children.len())));
        }
    }
    Ok(())
}

/// `π_J`, `x_{U(J),C}` and the concentration flag per component.
pub fn classify_components(fs: &FractionalSolution, comps: &[Component], l2: f64) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
    let mut pi = Vec::with_capacity(comps.len());
    let mut demand = Vec::with_capacity(comps.len());
    let mut flags = Vec::with_capacity(comps.len());
    for comp in comps {
        let mut p = 0.0;
        let mut d = 0.0;
        for j in 0..fs.nc() {
            let x = fs.x_set_client(&comp.facilities, j);
            p += x * (1.0 - x);
            d += x;
        }
        let p = p.max(0.0);
        flags.push(p <= d / l2);
        pi.push(p);
        demand.push(d);
    }
    (pi, demand, flags)
}

/// A union of non-concentrated components handled by one local solution.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub components: Vec<usize>,
    /// Representative positions, ascending.
    pub reps: Vec<usize>,
    pub facilities: Vec<usize>,
    /// The group whose children contribute the components, or the root group.
    pub group: usize,
    pub root: bool,
}

/// One family of the concentrated partition and the group that defines it.
#[derive(Clone, Debug, PartialEq)]
pub struct Family {
    pub components: Vec<usize>,
    pub group: usize,
    pub root: bool,
}

/// Root groups contribute their own components; non-leaf groups contribute
/// the union over their child groups.
pub fn build_partitions(comps: &[Component], groups: &[Group], flags: &[bool]) -> (Vec<Family>, Vec<Family>) {
    let mut jc = Vec::new();
    let mut jn = Vec::new();
    for (g, group) in groups.iter().enumerate() {
        if group.parent.is_none() {
            for (out, want) in [(&mut jc, true), (&mut jn, false)] {
                let set: Vec<usize> = group.components.iter().copied().filter(|&c| flags[c] == want).collect();
                if !set.is_empty() {
                    out.push(Family {
                        components: set,
                        group: g,
                        root: true,
                    });
                }
            }
        }
        if !group.children.is_empty() {
            for (out, want) in [(&mut jc, true), (&mut jn, false)] {
                let mut set: Vec<usize> = group
                    .children
                    .iter()
                    .flat_map(|&h| groups[h].components.iter().copied())
                    .filter(|&c| flags[c] == want)
                    .collect();
                set.sort_unstable();
                if !set.is_empty() {
                    out.push(Family {
                        components: set,
                        group: g,
                        root: false,
                    });
                }
            }
        }
    }
    let _ = comps;
    (jc, jn)
}

/// Everything the rounding stage needs about the clustering.
#[derive(Clone, Debug)]
pub struct ClusterStructure {
    pub l: f64,
    pub l2: f64,
    pub reps: Representatives,
    pub components: Vec<Component>,
    pub groups: Vec<Group>,
    pub group_of: Vec<usize>,
    pub pi: Vec<f64>,
    /// `x_{U(J),C}` per component.
    pub demand: Vec<f64>,
    pub concentrated: Vec<bool>,
    pub jc: Vec<Family>,
    pub jn: Vec<Family>,
    pub vn: Vec<Region>,
}

impl ClusterStructure {
    /// Builds and checks every phase.
    pub fn build(inst: &Instance, fs: &FractionalSolution, der: &Derived, l: f64, l2: f64, s: &Surrogates) -> Result<Self> {
        let reps = select_representatives(inst, fs, der);
        check_representatives(inst, fs, der, &reps)?;
        let components = build_black_components(inst, &reps, l);
        check_components(inst, &reps, &components, l, s)?;
        let (groups, group_of) = build_groups(&components, l);
        check_groups(inst, &reps, &components, &groups, l, s)?;
        let (pi, demand, concentrated) = classify_components(fs, &components, l2);
        let mut cs = ClusterStructure {
            l,
            l2,
            reps,
            components,
            groups,
            group_of,
            pi,
            demand,
            concentrated,
            jc: Vec::new(),
            jn: Vec::new(),
            vn: Vec::new(),
        };
        cs.check_pi_bound(inst, der)?;
        cs.rebuild_partitions();
        Ok(cs)
    }

    fn check_pi_bound(&self, inst: &Instance, der: &Derived) -> Result<()> {
        for (c, comp) in self.components.iter().enumerate() {
            if comp.l.is_finite() {
                let lhs = comp.l * self.pi[c];
                let rhs = 10.0 * der.d_set(&comp.facilities);
                if lhs > rhs + 1e-7 * scale(inst) * (1.0 + lhs) {
                    return Err(Error::invariant(STAGE, format!("L(J) pi_J = {lhs} exceeds 10 D = {rhs} at component {c}")));
                }
            }
        }
        Ok(())
    }

    /// Recomputes the partitions after concentration flags change.
    pub fn rebuild_partitions(&mut self) {
        let (jc, jn) = build_partitions(&self.components, &self.groups, &self.concentrated);
        self.vn = jn
            .iter()
            .map(|f| {
                let mut reps: Vec<usize> = f.components.iter().flat_map(|&c| self.components[c].reps.iter().copied()).collect();
                reps.sort_unstable();
                let mut facilities: Vec<usize> =
                    f.components.iter().flat_map(|&c| self.components[c].facilities.iter().copied()).collect();
                facilities.sort_unstable();
                Region {
                    components: f.components.clone(),
                    reps,
                    facilities,
                    group: f.group,
                    root: f.root,
                }
            })
            .collect();
        self.jc = jc;
        self.jn = jn;
    }

    /// Marks a component as non-concentrated and rebuilds the partitions.
    pub fn demote(&mut self, c: usize) {
        self.concentrated[c] = false;
        self.rebuild_partitions();
    }

    /// Index of the concentrated family containing component `c`.
    pub fn family_of(&self, c: usize) -> Option<usize> {
        self.jc.iter().position(|f| f.components.contains(&c))
    }

    /// Index of the region containing component `c`.
    pub fn region_of(&self, c: usize) -> Option<usize> {
        self.vn.iter().position(|r| r.components.contains(&c))
    }

    /// Union of the representative positions of a group.
    pub fn group_reps(&self, g: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self.groups[g].components.iter().flat_map(|&c| self.components[c].reps.iter().copied()).collect();
        v.sort_unstable();
        v
    }

    /// Union of the facilities of a group.
    pub fn group_facilities(&self, g: usize) -> Vec<usize> {
        let mut v: Vec<usize> =
            self.groups[g].components.iter().flat_map(|&c| self.components[c].facilities.iter().copied()).collect();
        v.sort_unstable();
        v
    }

    /// Text report with one line per bundle, component and group.
    pub fn dump(&self, inst: &Instance) -> String {
        let mut out = String::new();
        for (p, &v) in self.reps.reps.iter().enumerate() {
            let ids: Vec<&str> = self.reps.bundles[p].iter().map(|&i| inst.facilities()[i].id.as_str()).collect();
            let _ = writeln!(
                out,
                "bundle {} alpha={:.6} weight={:.6} facilities=[{}]",
                inst.clients()[v],
                self.reps.alpha[p],
                self.reps.weight[p],
                ids.join(",")
            );
        }
        for (c, comp) in self.components.iter().enumerate() {
            let reps: Vec<&str> = comp.reps.iter().map(|&p| inst.clients()[self.reps.reps[p]].as_str()).collect();
            let parent = comp.parent.map_or("-".to_string(), |p| p.to_string());
            let _ = writeln!(
                out,
                "component {c} parent={parent} group={} L={} weight={:.6} pi={:.6e} concentrated={} reps=[{}]",
                self.group_of[c],
                if comp.l.is_finite() { format!("{:.6}", comp.l) } else { "inf".into() },
                comp.weight,
                self.pi[c],
                self.concentrated[c],
                reps.join(",")
            );
        }
        for (g, group) in self.groups.iter().enumerate() {
            let parent = group.parent.map_or("-".to_string(), |p| p.to_string());
            let comps: Vec<String> = group.components.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(out, "group {g} parent={parent} weight={:.6} components=[{}]", group.weight, comps.join(","));
        }
        out
    }
}
