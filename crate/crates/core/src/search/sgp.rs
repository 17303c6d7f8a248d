//! Standard tree GP with subtree crossover and subtree mutation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{grow_subtree, Evaluator, Individual, SearchConfig, MAX_IDLE_GENERATIONS};
use crate::error::Result;
use crate::exprtree::{init_population, DynTree, InitScheme, TerminalSet};
use crate::search::Algorithm;

/// Draws `size` individuals with replacement and returns the index of the
/// lowest error among them; tied individuals win with equal probability.
pub fn tournament_select<G>(population: &[Individual<G>], size: usize, rng: &mut impl Rng) -> usize {
    assert!(!population.is_empty(), "tournament over an empty population");
    let mut winners: Vec<usize> = Vec::new();
    let mut best = f64::INFINITY;
    for _ in 0..size.max(1) {
        let i = rng.random_range(0..population.len());
        let e = population[i].error;
        if winners.is_empty() || e < best {
            best = e;
            winners.clear();
            winners.push(i);
        } else if e == best && !winners.contains(&i) {
            winners.push(i);
        }
    }
    winners.sort_unstable();
    winners[rng.random_range(0..winners.len())]
}

/// A uniformly chosen depth, then a uniformly chosen node at that depth.
fn pick_node(tree: &DynTree, rng: &mut impl Rng) -> Vec<usize> {
    let mut levels = tree.paths_by_depth();
    let d = rng.random_range(0..levels.len());
    let at = rng.random_range(0..levels[d].len());
    levels.swap_remove(d).swap_remove(at)
}

/// Replaces a node of `a` by a node of `b`. A child taller than
/// `max_height` is discarded in favour of a copy of `a`.
pub fn subtree_crossover(a: &DynTree, b: &DynTree, max_height: usize, rng: &mut impl Rng) -> DynTree {
    let at = pick_node(a, rng);
    let donor = pick_node(b, rng);
    let mut child = a.clone();
    child.replace(&at, b.subtree(&donor).clone());
    if child.height() > max_height {
        a.clone()
    } else {
        child
    }
}

/// Replaces a node of `a` by a fresh GROW subtree that keeps the child
/// within `max_height`; the subtree is also no taller than `subtree_height`.
pub fn subtree_mutation(
    a: &DynTree,
    max_height: usize,
    subtree_height: usize,
    terminals: &TerminalSet,
    rng: &mut ChaCha8Rng,
) -> DynTree {
    let at = pick_node(a, rng);
    let room = max_height.saturating_sub(at.len()).min(subtree_height);
    let mut child = a.clone();
    child.replace(&at, grow_subtree(room, terminals, rng));
    child
}

pub(super) fn run(
    config: &SearchConfig,
    terminals: &TerminalSet,
    ev: &mut Evaluator<'_>,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let p = &config.sgp;
    let (init_hi, cap) = match config.algorithm {
        Algorithm::Sgpb => (config.h, config.h),
        _ => (p.init_max_height, p.max_height),
    };
    let scheme = InitScheme::Ramped(2.min(init_hi), init_hi);
    let trees = init_population(config.population_size, scheme, 0, config.uniqueness_tries, terminals, rng);
    let mut population = Vec::with_capacity(trees.len());
    for genome in trees {
        let Some(s) = ev.evaluate(&genome, None)? else {
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
        let mut next = Vec::with_capacity(population.len());
        // Stable sort: among equal errors the earlier individual is the elite.
        let mut ranked: Vec<usize> = (0..population.len()).collect();
        ranked.sort_by(|&i, &j| population[i].error.total_cmp(&population[j].error));
        for &i in &ranked[..p.elitism] {
            next.push(population[i].clone());
        }
        while next.len() < population.len() {
            let a = tournament_select(&population, p.tournament_size, rng);
            let genome = if rng.random::<f64>() < p.crossover_rate {
                let b = tournament_select(&population, p.tournament_size, rng);
                subtree_crossover(&population[a].genome, &population[b].genome, cap, rng)
            } else {
                subtree_mutation(&population[a].genome, cap, init_hi, terminals, rng)
            };
            let Some(s) = ev.evaluate(&genome, Some(&population[a].cached()))? else {
                return Ok(());
            };
            next.push(Individual {
                genome,
                values: s.values,
                error: s.error,
            });
        }
        population = next;
        idle = if ev.budget().used == before { idle + 1 } else { 0 };
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprtree::Primitive;
    use rand::SeedableRng;

    fn ind(error: f64) -> Individual<()> {
        Individual {
            genome: (),
            values: Vec::new(),
            error,
        }
    }

    #[test]
    fn tournament_of_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(tournament_select(&[ind(3.0)], 7, &mut rng), 0);
    }

    #[test]
    fn tournament_prefers_lower_error() {
        let pop = vec![ind(5.0), ind(1.0), ind(3.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let wins = (0..500).filter(|_| tournament_select(&pop, 7, &mut rng) == 1).count();
        // P(index 1 never drawn in 7) = (2/3)^7 ≈ 0.059.
        assert!(wins > 430, "{wins}");
    }

    #[test]
    fn tournament_ties_are_uniform() {
        let pop = vec![ind(1.0); 4];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut counts = [0usize; 4];
        for _ in 0..4000 {
            counts[tournament_select(&pop, 7, &mut rng)] += 1;
        }
        assert!(counts.iter().all(|&c| (850..1150).contains(&c)), "{counts:?}");
    }

    #[test]
    fn crossover_of_terminals_yields_the_donor() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DynTree::feature(0);
        let b = DynTree::feature(1);
        assert_eq!(subtree_crossover(&a, &b, 17, &mut rng), b);
    }

    #[test]
    fn crossover_rejects_tall_children() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = DynTree::unary(Primitive::Square, DynTree::feature(0));
        let deep = (0..5).fold(DynTree::feature(1), |t, _| DynTree::unary(Primitive::Exp, t));
        for _ in 0..50 {
            let c = subtree_crossover(&a, &deep, 2, &mut rng);
            assert!(c.height() <= 2);
        }
    }

    #[test]
    fn mutation_respects_the_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let terminals = TerminalSet::new(3, (0.0, 1.0));
        let mut t = DynTree::feature(0);
        for _ in 0..200 {
            t = subtree_mutation(&t, 3, 3, &terminals, &mut rng);
            assert!(t.height() <= 3);
        }
    }
}
