//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use markup_core::model::{ProblemBuilder, ProblemInstance, Relation, RowTag, Sense, VarKind, VarName};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

pub fn rng(seed: u64) -> Xoshiro256StarStar {
    Xoshiro256StarStar::seed_from_u64(seed)
}

/// Random LP with at most 8 columns and 8 rows, every column boxed.
pub fn random_lp(rng: &mut impl Rng) -> ProblemInstance {
    let n = rng.random_range(1..=8);
    let m = rng.random_range(1..=8);
    let sense = if rng.random_bool(0.5) { Sense::Maximize } else { Sense::Minimize };
    let mut b = ProblemBuilder::new(sense);
    for j in 0..n {
        let lo = if rng.random_bool(0.3) { -3.0 } else { 0.0 };
        let hi = rng.random_range(2..=10) as f64;
        let c = rng.random_range(-5..=5) as f64;
        b.add_var(VarName::Generic(j), lo, hi, VarKind::Continuous, c);
    }
    for i in 0..m {
        let mut terms = Vec::new();
        for j in 0..n {
            if rng.random_bool(0.6) {
                terms.push((j, rng.random_range(-4..=4) as f64));
            }
        }
        let rel = match rng.random_range(0..10) {
            0 => Relation::Eq,
            1..=3 => Relation::Ge,
            _ => Relation::Le,
        };
        let rhs = rng.random_range(-5..=15) as f64;
        b.add_row(terms, rel, rhs, RowTag::Generic(i));
    }
    b.build().expect("well-formed random LP")
}

struct Halfspace {
    a: Vec<f64>,
    b: f64,
    rel: Relation,
}

/// Best objective over all vertices of a bounded polytope, found by solving
/// every square subsystem of active constraints. `None` when infeasible.
pub fn vertex_oracle(inst: &ProblemInstance) -> Option<f64> {
    let n = inst.num_vars();
    let mut planes = Vec::new();
    for c in inst.constraints() {
        let mut a = vec![0.0; n];
        for &(j, v) in &c.terms {
            a[j] += v;
        }
        planes.push(Halfspace { a, b: c.rhs, rel: c.relation });
    }
    for (j, v) in inst.variables().iter().enumerate() {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push(Halfspace { a: e.clone(), b: v.lower, rel: Relation::Ge });
        planes.push(Halfspace { a: e, b: v.upper, rel: Relation::Le });
    }
    let forced: Vec<usize> = (0..planes.len()).filter(|&i| planes[i].rel == Relation::Eq).collect();
    let optional: Vec<usize> = (0..planes.len()).filter(|&i| planes[i].rel != Relation::Eq).collect();
    if forced.len() > n {
        // overdetermined equalities: fall back on subsets of them
        return subsets_oracle(inst, &planes, &(0..planes.len()).collect::<Vec<_>>(), &[], n);
    }
    subsets_oracle(inst, &planes, &optional, &forced, n)
}

fn subsets_oracle(
    inst: &ProblemInstance,
    planes: &[Halfspace],
    pool: &[usize],
    forced: &[usize],
    n: usize,
) -> Option<f64> {
    let need = n - forced.len();
    let maximize = inst.sense == Sense::Maximize;
    let mut best: Option<f64> = None;
    let mut chosen: Vec<usize> = forced.to_vec();
    fn rec(
        start: usize,
        need: usize,
        pool: &[usize],
        chosen: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize]),
    ) {
        if need == 0 {
            visit(chosen);
            return;
        }
        for k in start..pool.len() {
            if pool.len() - k < need {
                break;
            }
            chosen.push(pool[k]);
            rec(k + 1, need - 1, pool, chosen, visit);
            chosen.pop();
        }
    }
    let mut visit = |active: &[usize]| {
        let a = DMatrix::from_fn(n, n, |r, c| planes[active[r]].a[c]);
        let b = DVector::from_fn(n, |r, _| planes[active[r]].b);
        let lu = a.lu();
        if lu.determinant().abs() < 1e-9 {
            return;
        }
        let Some(x) = lu.solve(&b) else { return };
        let x: Vec<f64> = x.iter().copied().collect();
        let feasible = planes.iter().all(|h| {
            let act: f64 = h.a.iter().zip(&x).map(|(a, v)| a * v).sum();
            let tol = 1e-9 * (1.0 + h.b.abs());
            match h.rel {
                Relation::Eq => (act - h.b).abs() <= tol,
                Relation::Le => act <= h.b + tol,
                Relation::Ge => act >= h.b - tol,
            }
        });
        if !feasible {
            return;
        }
        let obj = inst.objective_value(&x);
        best = Some(match best {
            None => obj,
            Some(b) if maximize => b.max(obj),
            Some(b) => b.min(obj),
        });
    };
    rec(0, need, pool, &mut chosen, &mut visit);
    best
}
