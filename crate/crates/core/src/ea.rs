//! Evolutionary operators shared by both models, and the generational
//! Island-model engine.

use std::collections::VecDeque;

use rand::Rng;
use thiserror::Error;

use crate::benchmarks::{BenchmarkError, Genome, ProblemInstance};
use crate::gossip::Contribution;
use crate::NodeId;

#[derive(Debug, Error, PartialEq)]
pub enum EaError {
    #[error("selection pool holds {0} individuals, at least 2 are required")]
    PoolTooSmall(usize),
    #[error("tournament size must be at least 2, got {0}")]
    InvalidTournament(usize),
    #[error("parent genomes differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("invalid bounds for gene {index}: lower {lower} must be below upper {upper}")]
    InvalidBounds {
        index: usize,
        lower: f64,
        upper: f64,
    },
    #[error("population is empty")]
    EmptyPopulation,
    #[error("individual has not been evaluated")]
    Unevaluated,
    #[error(transparent)]
    Benchmark(#[from] BenchmarkError),
}

/// A genome plus its cached objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genome: Genome,
    pub fitness: Option<f64>,
}

impl Individual {
    pub fn unevaluated(genome: Genome) -> Self {
        Individual {
            genome,
            fitness: None,
        }
    }

    pub fn evaluated(genome: Genome, fitness: f64) -> Self {
        Individual {
            genome,
            fitness: Some(fitness),
        }
    }

    /// Evaluates the genome against `instance`.
    pub fn from_genome(genome: Genome, instance: &ProblemInstance) -> Result<Self, EaError> {
        let fitness = instance.evaluate(&genome)?;
        Ok(Individual::evaluated(genome, fitness))
    }

    /// Uniformly random genome inside the instance bounds, evaluated.
    pub fn random<R: Rng + ?Sized>(instance: &ProblemInstance, rng: &mut R) -> Self {
        let genes = instance
            .lower()
            .iter()
            .zip(instance.upper())
            .map(|(lo, hi)| rng.random_range(*lo..=*hi))
            .collect();
        Individual::from_genome(Genome(genes), instance)
            .expect("random genome matches the instance dimension")
    }

    /// Unevaluated individuals rank last.
    pub fn fitness_or_inf(&self) -> f64 {
        self.fitness.unwrap_or(f64::INFINITY)
    }

    pub fn is_better_than(&self, other: &Individual) -> bool {
        self.fitness_or_inf() < other.fitness_or_inf()
    }
}

/// How `select_parents` turns tournament draws into a parent pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelectionScheme {
    /// Draw `k` members once and keep the two best.
    #[default]
    BestTwoOfK,
    /// Two independent `k`-tournaments, one winner each.
    TwoTournaments,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorConfig {
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    pub tournament_size: usize,
    pub selection: SelectionScheme,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        OperatorConfig {
            crossover_prob: 0.9,
            mutation_prob: 0.01,
            tournament_size: 2,
            selection: SelectionScheme::BestTwoOfK,
        }
    }
}

/// Random-access view over the individuals a selection may draw from.
pub trait SelectionPool {
    fn pool_len(&self) -> usize;
    fn member(&self, index: usize) -> &Individual;
}

impl SelectionPool for [Individual] {
    fn pool_len(&self) -> usize {
        self.len()
    }

    fn member(&self, index: usize) -> &Individual {
        &self[index]
    }
}

impl SelectionPool for Vec<Individual> {
    fn pool_len(&self) -> usize {
        self.len()
    }

    fn member(&self, index: usize) -> &Individual {
        &self[index]
    }
}

impl SelectionPool for [&Individual] {
    fn pool_len(&self) -> usize {
        self.len()
    }

    fn member(&self, index: usize) -> &Individual {
        self[index]
    }
}

/// Draws `k` members uniformly with replacement and returns the indices of
/// the best two, better first. Ties keep sample order.
pub fn select_parent_indices<P, R>(
    pool: &P,
    k: usize,
    rng: &mut R,
) -> Result<(usize, usize), EaError>
where
    P: SelectionPool + ?Sized,
    R: Rng + ?Sized,
{
    let n = pool.pool_len();
    if n < 2 {
        return Err(EaError::PoolTooSmall(n));
    }
    if k < 2 {
        return Err(EaError::InvalidTournament(k));
    }
    let mut first = rng.random_range(0..n);
    let mut second = rng.random_range(0..n);
    if pool.member(second).is_better_than(pool.member(first)) {
        std::mem::swap(&mut first, &mut second);
    }
    for _ in 2..k {
        let idx = rng.random_range(0..n);
        let cand = pool.member(idx);
        if cand.is_better_than(pool.member(first)) {
            second = first;
            first = idx;
        } else if cand.is_better_than(pool.member(second)) {
            second = idx;
        }
    }
    Ok((first, second))
}

/// Winner index of a single `k`-tournament with replacement.
pub fn tournament_index<P, R>(pool: &P, k: usize, rng: &mut R) -> Result<usize, EaError>
where
    P: SelectionPool + ?Sized,
    R: Rng + ?Sized,
{
    let n = pool.pool_len();
    if n == 0 {
        return Err(EaError::PoolTooSmall(0));
    }
    if k == 0 {
        return Err(EaError::InvalidTournament(0));
    }
    let mut best = rng.random_range(0..n);
    for _ in 1..k {
        let idx = rng.random_range(0..n);
        if pool.member(idx).is_better_than(pool.member(best)) {
            best = idx;
        }
    }
    Ok(best)
}

/// Best two of `k` uniform draws (with replacement), better first.
pub fn select_parents<'p, P, R>(
    pool: &'p P,
    k: usize,
    rng: &mut R,
) -> Result<(&'p Individual, &'p Individual), EaError>
where
    P: SelectionPool + ?Sized,
    R: Rng + ?Sized,
{
    let (a, b) = select_parent_indices(pool, k, rng)?;
    Ok((pool.member(a), pool.member(b)))
}

/// Dispatches on the configured [`SelectionScheme`].
pub fn select_pair<'p, P, R>(
    pool: &'p P,
    cfg: &OperatorConfig,
    rng: &mut R,
) -> Result<(&'p Individual, &'p Individual), EaError>
where
    P: SelectionPool + ?Sized,
    R: Rng + ?Sized,
{
    match cfg.selection {
        SelectionScheme::BestTwoOfK => select_parents(pool, cfg.tournament_size, rng),
        SelectionScheme::TwoTournaments => {
            let n = pool.pool_len();
            if n < 2 {
                return Err(EaError::PoolTooSmall(n));
            }
            let a = tournament_index(pool, cfg.tournament_size, rng)?;
            let b = tournament_index(pool, cfg.tournament_size, rng)?;
            let (a, b) = (pool.member(a), pool.member(b));
            Ok(if b.is_better_than(a) { (b, a) } else { (a, b) })
        }
    }
}

/// With probability `pc` every gene comes from `a` or `b` with equal odds;
/// otherwise the child is a copy of `a`.
pub fn uniform_crossover<R: Rng + ?Sized>(
    a: &Genome,
    b: &Genome,
    pc: f64,
    rng: &mut R,
) -> Result<Genome, EaError> {
    if a.len() != b.len() {
        return Err(EaError::LengthMismatch(a.len(), b.len()));
    }
    if !rng.random_bool(pc.clamp(0.0, 1.0)) {
        return Ok(a.clone());
    }
    let (ga, gb) = (a.genes(), b.genes());
    let mut child = Vec::with_capacity(ga.len());
    let mut bits = 0u64;
    for i in 0..ga.len() {
        if i % 64 == 0 {
            bits = rng.random();
        }
        child.push(if bits & 1 == 0 { ga[i] } else { gb[i] });
        bits >>= 1;
    }
    Ok(Genome(child))
}

/// Per-gene uniform reset: each gene is redrawn from `[lower_i, upper_i]`
/// with probability `pm`.
pub fn uniform_mutation<R: Rng + ?Sized>(
    mut g: Genome,
    pm: f64,
    lower: &[f64],
    upper: &[f64],
    rng: &mut R,
) -> Result<Genome, EaError> {
    for (index, (lo, hi)) in lower.iter().zip(upper).enumerate() {
        if lo.partial_cmp(hi) != Some(std::cmp::Ordering::Less) {
            return Err(EaError::InvalidBounds {
                index,
                lower: *lo,
                upper: *hi,
            });
        }
    }
    if lower.len() != g.len() || upper.len() != g.len() {
        return Err(EaError::LengthMismatch(
            g.len(),
            lower.len().min(upper.len()),
        ));
    }
    if pm <= 0.0 {
        return Ok(g);
    }
    for (gene, (lo, hi)) in g.0.iter_mut().zip(lower.iter().zip(upper)) {
        if rng.random::<f64>() < pm {
            *gene = rng.random_range(*lo..=*hi);
        }
    }
    Ok(g)
}

/// Selection, recombination and mutation of one offspring; not evaluated.
pub fn breed<P, R>(
    pool: &P,
    instance: &ProblemInstance,
    cfg: &OperatorConfig,
    rng: &mut R,
) -> Result<Genome, EaError>
where
    P: SelectionPool + ?Sized,
    R: Rng + ?Sized,
{
    let (a, b) = select_pair(pool, cfg, rng)?;
    let child = uniform_crossover(&a.genome, &b.genome, cfg.crossover_prob, rng)?;
    uniform_mutation(
        child,
        cfg.mutation_prob,
        instance.lower(),
        instance.upper(),
        rng,
    )
}

fn best_index(population: &[Individual]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, ind) in population.iter().enumerate() {
        match best {
            Some(b) if !ind.is_better_than(&population[b]) => {}
            _ => best = Some(i),
        }
    }
    best
}

/// One deme of the Island model.
#[derive(Debug, Clone)]
pub struct Island {
    pub id: NodeId,
    pub population: Vec<Individual>,
    pub generation: u64,
    pub inbox: VecDeque<Individual>,
    pub elite: Individual,
    pub evaluations: u64,
}

/// What one call to [`Island::run_generation`] did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationReport {
    pub migrants_absorbed: usize,
    pub evaluations: u64,
    pub elite_reinserted: bool,
    pub elite_fitness: f64,
}

impl Island {
    pub fn new(id: NodeId, population: Vec<Individual>) -> Result<Self, EaError> {
        if population.iter().any(|i| i.fitness.is_none()) {
            return Err(EaError::Unevaluated);
        }
        let elite = population[best_index(&population).ok_or(EaError::EmptyPopulation)?].clone();
        Ok(Island {
            id,
            population,
            generation: 0,
            inbox: VecDeque::new(),
            elite,
            evaluations: 0,
        })
    }

    /// Random initial population. Initialization evaluations are not charged
    /// to the island's budget counter.
    pub fn random<R: Rng + ?Sized>(
        id: NodeId,
        size: usize,
        instance: &ProblemInstance,
        rng: &mut R,
    ) -> Result<Self, EaError> {
        let population = (0..size)
            .map(|_| Individual::random(instance, rng))
            .collect();
        Island::new(id, population)
    }

    pub fn best(&self) -> Option<&Individual> {
        best_index(&self.population).map(|i| &self.population[i])
    }

    pub fn receive(&mut self, migrant: Individual) {
        self.inbox.push_back(migrant);
    }

    /// Absorbs waiting migrants, each over a uniformly random resident.
    pub fn absorb_migrants<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        let mut absorbed = 0;
        while let Some(m) = self.inbox.pop_front() {
            let slot = rng.random_range(0..self.population.len());
            self.population[slot] = m;
            absorbed += 1;
        }
        absorbed
    }

    /// One generational step with elitism.
    pub fn run_generation<R: Rng + ?Sized>(
        &mut self,
        instance: &ProblemInstance,
        cfg: &OperatorConfig,
        rng: &mut R,
    ) -> Result<GenerationReport, EaError> {
        if self.population.is_empty() {
            return Err(EaError::EmptyPopulation);
        }
        let migrants_absorbed = self.absorb_migrants(rng);
        if let Some(b) = self.best() {
            if b.is_better_than(&self.elite) {
                self.elite = b.clone();
            }
        }

        let size = self.population.len();
        let mut next = Vec::with_capacity(size);
        for _ in 0..size {
            let child = breed(&self.population, instance, cfg, rng)?;
            next.push(Individual::from_genome(child, instance)?);
        }
        let elite_fit = self.elite.fitness_or_inf();
        let elite_reinserted = !next.iter().any(|i| i.fitness_or_inf() <= elite_fit);
        if elite_reinserted {
            let slot = rng.random_range(0..size);
            next[slot] = self.elite.clone();
        }
        self.population = next;
        if let Some(b) = self.best() {
            if b.is_better_than(&self.elite) {
                self.elite = b.clone();
            }
        }
        self.generation += 1;
        self.evaluations += size as u64;
        Ok(GenerationReport {
            migrants_absorbed,
            evaluations: size as u64,
            elite_reinserted,
            elite_fitness: self.elite.fitness_or_inf(),
        })
    }

    /// Copy of the current best resident, stamped with this island's
    /// evaluation count. The island itself is left untouched.
    pub fn migration_event(&self) -> Result<Contribution, EaError> {
        let best = self.best().ok_or(EaError::EmptyPopulation)?.clone();
        Contribution::new(self.id, self.evaluations, best).map_err(|_| EaError::Unevaluated)
    }
}

/// True when an island that has just finished `generation` should emit a
/// migrant under a fixed `frequency`.
pub fn migration_due(generation: u64, frequency: u64) -> bool {
    frequency > 0 && generation > 0 && generation.is_multiple_of(frequency)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::{make_instance, ProblemKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ind(f: f64) -> Individual {
        Individual::evaluated(Genome(vec![f]), f)
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn crossover_of_identical_parents_is_identity() {
        let a = Genome(vec![1.5, -2.0, 3.25]);
        for pc in [0.0, 0.5, 1.0] {
            assert_eq!(uniform_crossover(&a, &a, pc, &mut rng(1)).unwrap(), a);
        }
    }

    #[test]
    fn crossover_without_probability_copies_first_parent() {
        let a = Genome(vec![0.0; 50]);
        let b = Genome(vec![1.0; 50]);
        let mut r = rng(2);
        for _ in 0..100 {
            assert_eq!(uniform_crossover(&a, &b, 0.0, &mut r).unwrap(), a);
        }
    }

    #[test]
    fn crossover_gene_origin_fraction() {
        let d = 10_000;
        let a = Genome(vec![0.0; d]);
        let b = Genome(vec![1.0; d]);
        let child = uniform_crossover(&a, &b, 1.0, &mut rng(3)).unwrap();
        let from_a = child.genes().iter().filter(|g| **g == 0.0).count();
        let frac = from_a as f64 / d as f64;
        assert!((0.45..=0.55).contains(&frac), "fraction {frac}");
    }

    #[test]
    fn crossover_length_mismatch() {
        let err = uniform_crossover(
            &Genome(vec![0.0]),
            &Genome(vec![0.0, 1.0]),
            1.0,
            &mut rng(0),
        );
        assert_eq!(err, Err(EaError::LengthMismatch(1, 2)));
    }

    #[test]
    fn mutation_rates() {
        let lower = vec![-5.0; 100];
        let upper = vec![5.0; 100];
        let g = Genome(vec![0.25; 100]);
        let mut r = rng(4);
        assert_eq!(
            uniform_mutation(g.clone(), 0.0, &lower, &upper, &mut r).unwrap(),
            g
        );
        let m = uniform_mutation(g.clone(), 1.0, &lower, &upper, &mut r).unwrap();
        assert!(m.genes().iter().all(|x| (-5.0..=5.0).contains(x)));
        assert!(m.genes().iter().all(|x| *x != 0.25));

        let trials = 10_000;
        let mut mutated = 0usize;
        for _ in 0..trials {
            let m = uniform_mutation(g.clone(), 0.01, &lower, &upper, &mut r).unwrap();
            mutated += m.genes().iter().filter(|x| **x != 0.25).count();
        }
        let mean = mutated as f64 / trials as f64;
        assert!((mean - 1.0).abs() <= 0.1, "mean mutated genes {mean}");
    }

    #[test]
    fn mutation_rejects_inverted_bounds() {
        let err = uniform_mutation(
            Genome(vec![0.0, 0.0]),
            0.5,
            &[0.0, 1.0],
            &[1.0, 1.0],
            &mut rng(0),
        );
        assert!(matches!(err, Err(EaError::InvalidBounds { index: 1, .. })));
    }

    #[test]
    fn select_parents_best_two() {
        let pool = vec![ind(5.0), ind(3.0)];
        let mut r = rng(5);
        let mut saw_both = false;
        for _ in 0..50 {
            let (a, b) = select_parents(&pool, 2, &mut r).unwrap();
            assert!(a.fitness <= b.fitness);
            if a.fitness == Some(3.0) && b.fitness == Some(5.0) {
                saw_both = true;
            }
        }
        assert!(saw_both);
    }

    #[test]
    fn select_parents_degenerate_pool() {
        let pool = vec![ind(7.0), ind(7.0), ind(7.0)];
        let (a, b) = select_parents(&pool, 3, &mut rng(6)).unwrap();
        assert_eq!((a.fitness, b.fitness), (Some(7.0), Some(7.0)));
    }

    #[test]
    fn select_parents_errors() {
        assert_eq!(
            select_parents(&vec![ind(1.0)], 2, &mut rng(0)).unwrap_err(),
            EaError::PoolTooSmall(1)
        );
        assert_eq!(
            select_parents(&vec![ind(1.0), ind(2.0)], 1, &mut rng(0)).unwrap_err(),
            EaError::InvalidTournament(1)
        );
    }

    #[test]
    fn two_tournament_scheme_orders_pair() {
        let pool: Vec<Individual> = (1..=8).map(|f| ind(f as f64)).collect();
        let cfg = OperatorConfig {
            selection: SelectionScheme::TwoTournaments,
            ..OperatorConfig::default()
        };
        let mut r = rng(7);
        for _ in 0..100 {
            let (a, b) = select_pair(&pool, &cfg, &mut r).unwrap();
            assert!(a.fitness <= b.fitness);
        }
    }

    fn small_island(seed: u64, size: usize) -> (Island, ProblemInstance, ChaCha8Rng) {
        let inst = make_instance(ProblemKind::ShiftedSphere, 10, 1).unwrap();
        let mut r = rng(seed);
        let island = Island::random(NodeId(0), size, &inst, &mut r).unwrap();
        (island, inst, r)
    }

    #[test]
    fn generation_accounting_and_elitism() {
        let (mut island, inst, mut r) = small_island(8, 8);
        let cfg = OperatorConfig::default();
        let mut elite = island.elite.fitness_or_inf();
        for g in 1..=20 {
            let rep = island.run_generation(&inst, &cfg, &mut r).unwrap();
            assert_eq!(rep.evaluations, 8);
            assert_eq!(island.evaluations, 8 * g);
            assert_eq!(island.population.len(), 8);
            assert!(island.elite.fitness_or_inf() <= elite);
            assert!(island.population.iter().all(|i| inst.contains(&i.genome)));
            elite = island.elite.fitness_or_inf();
        }
        assert_eq!(island.generation, 20);
    }

    #[test]
    fn one_migrant_displaces_one_resident() {
        let (mut island, inst, mut r) = small_island(9, 8);
        let before = island.population.clone();
        let migrant = Individual::from_genome(inst.optimum(), &inst).unwrap();
        island.receive(migrant.clone());
        assert_eq!(island.absorb_migrants(&mut r), 1);
        let missing = before
            .iter()
            .filter(|b| !island.population.contains(b))
            .count();
        assert_eq!(missing, 1);
        assert!(island.population.contains(&migrant));
    }

    #[test]
    fn migration_sends_best_copy() {
        let pop = vec![ind(7.0), ind(3.0)];
        let mut island = Island::new(NodeId(2), pop).unwrap();
        island.evaluations = 42;
        let c = island.migration_event().unwrap();
        assert_eq!(c.solution().fitness, Some(3.0));
        assert_eq!(c.num_evaluations(), 42);
        assert_eq!(c.address(), NodeId(2));
        island.population[1].genome.0[0] = 99.0;
        assert_eq!(c.solution().genome.genes(), &[3.0]);
    }

    #[test]
    fn migration_schedule_counts() {
        let events = (1..=250u64).filter(|g| migration_due(*g, 25)).count();
        assert_eq!(events, 10);
        assert!(!migration_due(0, 25));
    }
}
