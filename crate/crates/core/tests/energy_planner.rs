use mitl_relax::energy::{automaton_update, compute_energy, largest_self_reachable, EnergyConfig};
use mitl_relax::mitl::{parse, Alphabet, AtomSet};
use mitl_relax::planner::{enumerate_paths, initial_plan, PlannerConfig};
use mitl_relax::product::{build_product, Rpa};
use mitl_relax::tba::RelaxedTba;
use mitl_relax::wts::{Cell, Wts, ZeroReward};
use proptest::prelude::*;

fn instance(formula: &str, w: usize, h: usize, kinds: &[u8]) -> Rpa {
    let a = Alphabet::new(["obs", "g", "p"]).unwrap();
    let f = parse(formula, &a).unwrap();
    let mut labels = Vec::new();
    for (i, k) in kinds.iter().enumerate().take(w * h).skip(1) {
        let name = match k % 6 {
            0 => "obs",
            1 | 2 => "g",
            3 => "p",
            _ => continue,
        };
        labels.push((Cell::new(i % w, i / w), a.set_of([name]).unwrap()));
    }
    let wts = Wts::from_grid(w, h, &labels, Cell::new(0, 0), 1.0).unwrap();
    build_product(wts, RelaxedTba::build_pruned(&f).unwrap()).unwrap()
}

const FORMULAS: [&str; 3] = [
    "hard: G !obs ; soft: G !g & F[0,10) p",
    "hard: G !obs ; soft: G !g & G F[0,6) p",
    "hard: G !obs ; soft: g U[0,6) p",
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn greedy_descent_reaches_fstar(fi in 0usize..3, w in 2usize..5, h in 2usize..5, kinds in prop::collection::vec(any::<u8>(), 16)) {
        let rpa = instance(FORMULAS[fi], w, h, &kinds);
        let fs = largest_self_reachable(&rpa);
        let t = compute_energy(&rpa, &fs, &EnergyConfig::default());
        for start in (0..rpa.len()).filter(|&p| t.j[p].is_finite()) {
            let mut p = start;
            let mut steps = 0;
            while t.j[p] > 0.0 {
                let next = rpa
                    .out_transitions(p)
                    .iter()
                    .filter(|tr| !tr.blocked && !rpa.is_sink(tr.to))
                    .min_by(|a, b| t.j[a.to].total_cmp(&t.j[b.to]))
                    .map(|tr| tr.to);
                prop_assert!(next.is_some_and(|n| t.j[n] < t.j[p]));
                p = next.unwrap();
                steps += 1;
                prop_assert!(steps <= rpa.len());
            }
            prop_assert!(fs[p]);
        }
    }

    #[test]
    fn label_updates_keep_topology(w in 2usize..5, h in 2usize..5, kinds in prop::collection::vec(any::<u8>(), 16), flips in prop::collection::vec(0usize..16, 1..6)) {
        let mut rpa = instance(FORMULAS[0], w, h, &kinds);
        let before: Vec<(usize, usize)> = rpa.transitions().iter().map(|t| (t.from, t.to)).collect();
        let fs = largest_self_reachable(&rpa);
        let mut t = compute_energy(&rpa, &fs, &EnergyConfig::default());
        let obs = rpa.tba().alphabet.set_of(["obs"]).unwrap();
        for q in flips.into_iter().filter(|&q| q > 0 && q < w * h) {
            let l = if rpa.wts().label(q) == obs { AtomSet::EMPTY } else { obs };
            t = automaton_update(&mut rpa, &[(q, l)], &t, &EnergyConfig::default());
            let after: Vec<(usize, usize)> = rpa.transitions().iter().map(|t| (t.from, t.to)).collect();
            prop_assert_eq!(&after, &before);
            prop_assert_eq!(&t.fstar, &fs);
            prop_assert_eq!(&t, &compute_energy(&rpa, &fs, &EnergyConfig::default()).with_version(t.version));
        }
    }
}

trait WithVersion {
    fn with_version(self, v: u64) -> Self;
}

impl WithVersion for mitl_relax::energy::EnergyTable {
    fn with_version(mut self, v: u64) -> Self {
        self.version = v;
        self
    }
}

#[test]
fn initial_plan_is_an_enumerated_path() {
    let rpa = instance(FORMULAS[0], 4, 4, &[4, 4, 4, 1, 4, 4, 4, 4, 4, 4, 3, 4, 4, 4, 4, 4]);
    let fs = largest_self_reachable(&rpa);
    let t = compute_energy(&rpa, &fs, &EnergyConfig::default());
    let cfg = PlannerConfig::default();
    let plan = initial_plan(&rpa, &t, &[0.0], &ZeroReward, &cfg).unwrap();
    let p0 = rpa.initial_states()[0];
    assert!(enumerate_paths(&rpa, p0, &[0.0], cfg.horizon).contains(&plan.predicted));
    assert_eq!(plan.chosen, plan.predicted[0]);
    // four clean moves reach p at (2,2)
    assert_eq!(plan.utility, 0.0);
    assert_eq!(t.j[*plan.predicted.last().unwrap()], 0.0);
}
