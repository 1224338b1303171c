//! Brute-force path enumeration used as an independent oracle.

#![allow(dead_code)]

use std::collections::BTreeMap;

use cone_walker::exact::{self, Boundary, Domain, Kernel};
use cone_walker::{ConeSpec, StepDistribution};
use num_rational::BigRational;
use num_traits::Zero;

pub type Layer = BTreeMap<Vec<i64>, BigRational>;

/// Distribution of the surviving walk at each time `0..=n`, by walking
/// every path of length `n` step by step.
pub fn enumerate(model: &StepDistribution, cone: &ConeSpec, x: &[i64], n: usize) -> Vec<Layer> {
    let steps: Vec<(Vec<i64>, BigRational)> = model
        .steps()
        .iter()
        .map(|s| (s.v.clone(), s.p.exact.clone().expect("rational model")))
        .collect();
    let mut layers = vec![Layer::new(); n + 1];
    let mut pos = x.to_vec();
    let one = BigRational::from_integer(1.into());
    dfs(&steps, cone, &mut pos, one, 0, n, &mut layers);
    layers
}

fn dfs(
    steps: &[(Vec<i64>, BigRational)],
    cone: &ConeSpec,
    pos: &mut Vec<i64>,
    weight: BigRational,
    depth: usize,
    n: usize,
    layers: &mut [Layer],
) {
    let e = layers[depth].entry(pos.clone()).or_insert_with(BigRational::zero);
    *e += &weight;
    if depth == n {
        return;
    }
    for (v, p) in steps {
        for (a, b) in pos.iter_mut().zip(v) {
            *a += b;
        }
        if cone.contains_lattice(pos) {
            dfs(steps, cone, pos, &weight * p, depth + 1, n, layers);
        }
        for (a, b) in pos.iter_mut().zip(v) {
            *a -= b;
        }
    }
}

/// The same layers from the rational layer engine.
pub fn engine_layers(model: &StepDistribution, cone: &ConeSpec, x: &[i64], n: usize) -> Vec<Layer> {
    let kernel = Kernel::rational(model).expect("rational model");
    let domain = Domain {
        cone,
        boundary: Boundary::Open,
    };
    let mut out = Vec::new();
    exact::propagate(&kernel, domain, x, n as u64, None, |t| {
        out.push(
            t.iter()
                .filter(|(_, m)| !m.is_zero())
                .map(|(y, m)| (y, m.clone()))
                .collect(),
        )
    })
    .expect("propagation");
    out
}

/// Starting points `1..=k` in every coordinate.
pub fn start_box(dim: usize, k: i64) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|p| {
                (1..=k).map(move |c| {
                    let mut q = p.clone();
                    q.push(c);
                    q
                })
            })
            .collect();
    }
    out
}
