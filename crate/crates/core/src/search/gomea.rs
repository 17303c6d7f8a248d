//! GP-GOMEA: gene-pool optimal mixing over fixed-height templates, driven
//! by a family of subsets (FOS) of template positions.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Algorithm, Evaluator, Individual, SearchConfig, MAX_IDLE_GENERATIONS};
use crate::error::Result;
use crate::exprtree::{init_population, template_len, ExprTree, InitScheme, TerminalSet};

/// Subsets of template positions, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fos {
    pub subsets: Vec<Vec<usize>>,
}

/// Agglomerative clustering of `n` positions. `pick` chooses which two
/// active clusters to merge next. Every cluster except the final root is
/// kept: `2n - 2` subsets for `n >= 2`, and the lone singleton for `n = 1`.
fn merge_hierarchy(n: usize, mut pick: impl FnMut(&[Vec<usize>]) -> (usize, usize)) -> Fos {
    let mut subsets: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    if n == 1 {
        return Fos { subsets };
    }
    let mut active: Vec<Vec<usize>> = subsets.clone();
    while active.len() > 2 {
        let (a, b) = pick(&active);
        let (a, b) = (a.min(b), a.max(b));
        let cb = active.remove(b);
        let ca = active.remove(a);
        let mut merged = [ca, cb].concat();
        merged.sort_unstable();
        subsets.push(merged.clone());
        active.push(merged);
    }
    Fos { subsets }
}

/// Entropy of the empirical distribution given by `counts` over `n` draws.
fn entropy<'a>(counts: impl Iterator<Item = &'a usize>, n: f64) -> f64 {
    counts
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Pairwise mutual information between template positions, estimated from
/// symbol frequencies in `trees`. All constants share one symbol.
pub fn mutual_information(trees: &[&ExprTree]) -> Vec<Vec<f64>> {
    let l = trees.first().map_or(0, |t| t.len());
    let n = trees.len() as f64;
    let sym = |t: &ExprTree, i: usize| t.get(i).symbol();
    let h1: Vec<f64> = (0..l)
        .map(|i| {
            let mut c: HashMap<u32, usize> = HashMap::new();
            for t in trees {
                *c.entry(sym(t, i)).or_default() += 1;
            }
            entropy(c.values(), n)
        })
        .collect();
    let mut mi = vec![vec![0.0; l]; l];
    for i in 0..l {
        for j in i + 1..l {
            let mut c: HashMap<(u32, u32), usize> = HashMap::new();
            for t in trees {
                *c.entry((sym(t, i), sym(t, j))).or_default() += 1;
            }
            let v = (h1[i] + h1[j] - entropy(c.values(), n)).max(0.0);
            mi[i][j] = v;
            mi[j][i] = v;
        }
    }
    mi
}

/// Linkage tree: average-linkage (UPGMA) clustering on mutual information.
/// Positions are visited in a random order and only a strictly larger
/// similarity displaces the incumbent pair, so ties break at random.
pub fn build_linkage_tree(trees: &[&ExprTree], rng: &mut impl Rng) -> Fos {
    let l = trees.first().map_or(1, |t| t.len());
    let mi = mutual_information(trees);
    let mut order: Vec<usize> = (0..l).collect();
    order.shuffle(rng);
    let rank: Vec<usize> = {
        let mut r = vec![0; l];
        for (k, &p) in order.iter().enumerate() {
            r[p] = k;
        }
        r
    };
    merge_hierarchy(l, |active| {
        let mut by_rank: Vec<usize> = (0..active.len()).collect();
        by_rank.sort_by_key(|&c| active[c].iter().map(|&p| rank[p]).min());
        let sim = |a: &[usize], b: &[usize]| {
            let total: f64 = a.iter().flat_map(|&i| b.iter().map(move |&j| (i, j))).map(|(i, j)| mi[i][j]).sum();
            total / (a.len() * b.len()) as f64
        };
        let mut best = (by_rank[0], by_rank[1], f64::NEG_INFINITY);
        for (x, &a) in by_rank.iter().enumerate() {
            for &b in &by_rank[x + 1..] {
                let s = sim(&active[a], &active[b]);
                if s > best.2 {
                    best = (a, b, s);
                }
            }
        }
        (best.0, best.1)
    })
}

/// Random tree: the same hierarchy shape with uniformly random merges.
pub fn build_random_tree(n_positions: usize, rng: &mut impl Rng) -> Fos {
    assert!(n_positions >= 1, "empty template");
    merge_hierarchy(n_positions, |active| {
        let a = rng.random_range(0..active.len());
        let mut b = rng.random_range(0..active.len() - 1);
        if b >= a {
            b += 1;
        }
        (a, b)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GomStep {
    /// Donor and target agree on the subset; nothing was evaluated.
    NoChange,
    Accepted,
    Reverted,
    OutOfBudget,
}

/// Copies `donor` into `current` at `subset` and keeps the change when the
/// error does not get worse. Positions outside `subset` are never touched.
pub fn gom_step(
    current: &mut Individual<ExprTree>,
    subset: &[usize],
    donor: &ExprTree,
    ev: &mut Evaluator<'_>,
) -> Result<GomStep> {
    if subset.iter().all(|&p| current.genome.get(p).same_as(donor.get(p))) {
        return Ok(GomStep::NoChange);
    }
    let mut work = current.genome.clone();
    for &p in subset {
        work.set(p, donor.get(p));
    }
    let Some(s) = ev.evaluate(&work.to_dyn(), Some(&current.cached()))? else {
        return Ok(GomStep::OutOfBudget);
    };
    if s.error <= current.error {
        *current = Individual {
            genome: work,
            values: s.values,
            error: s.error,
        };
        Ok(GomStep::Accepted)
    } else {
        Ok(GomStep::Reverted)
    }
}

/// One GOM pass over `current`: subsets in random order, each with a donor
/// drawn uniformly from `donors`. Returns false once the budget runs out.
pub fn gom_variation(
    current: &mut Individual<ExprTree>,
    donors: &[Individual<ExprTree>],
    fos: &Fos,
    ev: &mut Evaluator<'_>,
    rng: &mut impl Rng,
) -> Result<bool> {
    let mut order: Vec<usize> = (0..fos.subsets.len()).collect();
    order.shuffle(rng);
    for k in order {
        let donor = &donors[rng.random_range(0..donors.len())].genome;
        if gom_step(current, &fos.subsets[k], donor, ev)? == GomStep::OutOfBudget {
            return Ok(false);
        }
    }
    Ok(true)
}

pub(super) fn run(
    config: &SearchConfig,
    terminals: &TerminalSet,
    ev: &mut Evaluator<'_>,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let h = config.h;
    let trees = init_population(
        config.population_size,
        InitScheme::HalfAndHalf(h),
        1,
        config.uniqueness_tries,
        terminals,
        rng,
    );
    let mut population = Vec::with_capacity(trees.len());
    for t in &trees {
        let genome = ExprTree::from_dyn(t, h, terminals, rng);
        let Some(s) = ev.evaluate(t, None)? else {
            return Ok(());
        };
        population.push(Individual {
            genome,
            values: s.values,
            error: s.error,
        });
    }

    let mut idle = 0;
    while idle < MAX_IDLE_GENERATIONS {
        let before = ev.budget().used;
        let fos = match config.algorithm {
            Algorithm::GomeaLt => {
                let genomes: Vec<&ExprTree> = population.iter().map(|i| &i.genome).collect();
                build_linkage_tree(&genomes, rng)
            }
            _ => build_random_tree(template_len(h), rng),
        };
        let snapshot = population.clone();
        for ind in &mut population {
            if !gom_variation(ind, &snapshot, &fos, ev, rng)? {
                return Ok(());
            }
        }
        idle = if ev.budget().used == before { idle + 1 } else { 0 };
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprtree::Primitive::{self, *};
    use crate::search::FnFitness;
    use crate::semantics::{eval_template, Bounds};
    use rand::SeedableRng;

    fn tpl(nodes: Vec<Primitive>) -> ExprTree {
        ExprTree::from_nodes(nodes, 1)
    }

    #[test]
    fn fos_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(build_random_tree(7, &mut rng).subsets.len(), 12);
        assert_eq!(build_random_tree(1, &mut rng).subsets, vec![vec![0]]);
        assert_eq!(build_random_tree(2, &mut rng).subsets, vec![vec![0], vec![1]]);
        let t = tpl(vec![Add, Feature(0), Feature(1)]);
        let trees = vec![&t, &t];
        assert_eq!(build_linkage_tree(&trees, &mut rng).subsets.len(), 4);
    }

    #[test]
    fn random_tree_is_seeded() {
        let a = build_random_tree(15, &mut ChaCha8Rng::seed_from_u64(9));
        let b = build_random_tree(15, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn correlated_positions_merge_first() {
        // Positions 1 and 2 always vary together; position 0 varies on its own.
        let trees: Vec<ExprTree> = (0..40)
            .map(|i| {
                let root = if (i / 2) % 2 == 0 { Add } else { Mul };
                let leaf = if i % 2 == 0 { Feature(0) } else { Feature(1) };
                tpl(vec![root, leaf, leaf])
            })
            .collect();
        let refs: Vec<&ExprTree> = trees.iter().collect();
        for seed in 0..10 {
            let fos = build_linkage_tree(&refs, &mut ChaCha8Rng::seed_from_u64(seed));
            assert_eq!(fos.subsets[3], vec![1, 2]);
        }
    }

    #[test]
    fn constants_share_a_symbol() {
        let a = tpl(vec![Add, Const(1.0), Feature(0)]);
        let b = tpl(vec![Add, Const(2.0), Feature(0)]);
        let mi = mutual_information(&[&a, &b]);
        assert!(mi.iter().flatten().all(|&v| v == 0.0));
    }

    fn fitness() -> FnFitness<impl FnMut(&[f64]) -> f64> {
        let target = vec![2.0, 6.0, 12.0];
        FnFitness {
            columns: vec![vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0]],
            previous: Vec::new(),
            max_error: f64::INFINITY,
            f: move |v: &[f64]| v.iter().zip(&target).map(|(a, b)| (a - b).abs()).sum(),
        }
    }

    fn individual(genome: ExprTree, ev: &mut Evaluator<'_>) -> Individual<ExprTree> {
        let s = ev.evaluate(&genome.to_dyn(), None).unwrap().unwrap();
        Individual {
            genome,
            values: s.values,
            error: s.error,
        }
    }

    #[test]
    fn identical_donor_costs_nothing() {
        let mut f = fitness();
        let mut ev = Evaluator::new(&mut f, 100, Bounds::default(), false);
        let mut cur = individual(tpl(vec![Add, Feature(0), Feature(1)]), &mut ev);
        let used = ev.budget().used;
        let donor = tpl(vec![Add, Feature(0), Feature(0)]);
        assert_eq!(gom_step(&mut cur, &[0, 1], &donor, &mut ev).unwrap(), GomStep::NoChange);
        assert_eq!(ev.budget().used, used);
    }

    #[test]
    fn intron_change_is_free_and_accepted() {
        let mut f = fitness();
        let mut ev = Evaluator::new(&mut f, 100, Bounds::default(), false);
        let mut cur = individual(tpl(vec![Square, Feature(0), Feature(1)]), &mut ev);
        let used = ev.budget().used;
        let donor = tpl(vec![Square, Feature(0), Feature(0)]);
        assert_eq!(gom_step(&mut cur, &[2], &donor, &mut ev).unwrap(), GomStep::Accepted);
        assert_eq!(ev.budget().used, used);
        assert_eq!(cur.genome.get(2), Feature(0));
    }

    #[test]
    fn step_is_homologous_and_monotone() {
        let mut f = fitness();
        let mut ev = Evaluator::new(&mut f, 100, Bounds::default(), false);
        let mut cur = individual(tpl(vec![Add, Feature(0), Feature(1)]), &mut ev);
        let before = cur.clone();
        let better = tpl(vec![Mul, Feature(1), Feature(1)]);
        assert_eq!(gom_step(&mut cur, &[0], &better, &mut ev).unwrap(), GomStep::Accepted);
        assert!(cur.error <= before.error);
        assert_eq!(&cur.genome.nodes()[1..], &before.genome.nodes()[1..]);
        assert_eq!(cur.values, eval_template(&cur.genome, &[vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0]]).unwrap());
        let worse = tpl(vec![Sub, Feature(1), Feature(1)]);
        let snapshot = cur.clone();
        assert_eq!(gom_step(&mut cur, &[0], &worse, &mut ev).unwrap(), GomStep::Reverted);
        assert_eq!(cur, snapshot);
    }
}
