use std::sync::Arc;

use proptest::prelude::*;

use sandflow::eikonal::lax_hopf;
use sandflow::geometry::{build_domain, DomainSpec, Shape};
use sandflow::projection::{is_admissible, project, qp_oracle_project, AdmissibleSet};
use sandflow::{build_grid, ScalarField};

/// Small container with affine walls; `values` has one entry per cell of the largest grid.
#[derive(Debug, Clone)]
enum Container {
    Interval { cells: usize, left: f64, right: f64 },
    Rect { nx: usize, ny: usize, slope: [f64; 2] },
}

fn container() -> impl Strategy<Value = Container> {
    prop_oneof![
        (4usize..=40, 0.0..1.0, 0.0..1.0).prop_map(|(cells, left, right)| Container::Interval { cells, left, right }),
        (3usize..=7, 3usize..=7, -0.6..0.6, -0.6..0.6).prop_map(|(nx, ny, a, b)| Container::Rect { nx, ny, slope: [a, b] }),
    ]
}

fn build(c: &Container) -> Arc<AdmissibleSet> {
    let (domain, boundary, h) = match *c {
        Container::Interval { cells, left, right } => {
            let spec = DomainSpec::interval(-1.0, 1.0).unwrap();
            let (d, b) = build_domain(spec, |y| if y[0] < 0.0 { left } else { right }).unwrap();
            (d, b, 2.0 / cells as f64)
        }
        Container::Rect { nx, ny, slope } => {
            let h = 0.1;
            let shape = Shape::Box {
                lo: [0.0, 0.0],
                hi: [nx as f64 * h, ny as f64 * h],
            };
            let spec = DomainSpec::new(2, shape, 48).unwrap();
            let (d, b) = build_domain(spec, |y| 1.0 + slope[0] * y[0] + slope[1] * y[1]).unwrap();
            (d, b, h)
        }
    };
    let grid = Arc::new(build_grid(&domain, h).unwrap());
    Arc::new(AdmissibleSet::new(&lax_hopf(&grid, &boundary).unwrap()).unwrap())
}

fn field(set: &AdmissibleSet, raw: &[f64]) -> ScalarField {
    let g = set.grid().clone();
    let n = g.len();
    ScalarField::new(g, raw[..n].to_vec()).unwrap()
}

fn l2(a: &ScalarField, b: &ScalarField) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

const MAX_CELLS: usize = 49;

fn raw() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..2.0, MAX_CELLS)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn result_is_admissible_and_idempotent(c in container(), w in raw()) {
        let set = build(&c);
        let p = project(&field(&set, &w), &set).unwrap();
        let (ok, violation) = is_admissible(&p, &set).unwrap();
        prop_assert!(ok, "violation {violation}");
        let again = project(&p, &set).unwrap();
        prop_assert!(again.sup_distance(&p) <= 1e-8);
    }

    #[test]
    fn matches_active_set_oracle(c in container(), w in raw()) {
        let set = build(&c);
        let w = field(&set, &w);
        let fast = project(&w, &set).unwrap();
        let exact = qp_oracle_project(&w, &set).unwrap();
        prop_assert!(fast.sup_distance(&exact) <= 1e-6);
    }

    #[test]
    fn nonexpansive(c in container(), a in raw(), b in raw()) {
        let set = build(&c);
        let (wa, wb) = (field(&set, &a), field(&set, &b));
        let (pa, pb) = (project(&wa, &set).unwrap(), project(&wb, &set).unwrap());
        prop_assert!(l2(&pa, &pb) <= l2(&wa, &wb) + 1e-8);
    }

    /// The admissible set is closed under pointwise min and max, so the projection preserves order.
    #[test]
    fn order_preserving(c in container(), a in raw(), d in prop::collection::vec(0.0..1.0, MAX_CELLS)) {
        let set = build(&c);
        let low = field(&set, &a);
        let high = low.zip_map(&field(&set, &d), |x, y| x + y).unwrap();
        let (pl, ph) = (project(&low, &set).unwrap(), project(&high, &set).unwrap());
        let worst = pl.values().iter().zip(ph.values()).map(|(l, h)| l - h).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(worst <= 1e-8, "order violated by {worst}");
    }

    /// Variational characterization: `(w - Pw, z - Pw) <= 0` for admissible `z`.
    #[test]
    fn obtuse_angle_condition(c in container(), a in raw(), b in raw()) {
        let set = build(&c);
        let w = field(&set, &a);
        let p = project(&w, &set).unwrap();
        let z = project(&field(&set, &b), &set).unwrap();
        let inner: f64 = (0..p.len())
            .map(|k| (w.values()[k] - p.values()[k]) * (z.values()[k] - p.values()[k]))
            .sum();
        prop_assert!(inner <= 1e-7, "inner product {inner}");
    }
}
