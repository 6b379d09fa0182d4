//! NSGA-II over latent vectors, maximizing output divergence and image
//! diversity against the archive's representatives.

mod operators;

pub use operators::{
    crowded_cmp, crowding_distance, dominates, mutate_gene, non_dominated_sort, polynomial_mutation, rank_and_crowd,
    sbx_beta, sbx_crossover, sbx_genes, tournament_select, Objectives, SBX_GENE_PROBABILITY,
};

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{refresh_representatives, ClusterConfig};
use crate::error::{Error, Result};
use crate::fitness::{diversity_fitness, evaluate, Archive, Evaluation, TriggeringRecord};
use crate::modelhub::{Classifier, Generator};
use crate::types::{Image, LatentVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    /// Total number of individuals evaluated, including the initial population.
    Evaluations(u64),
    /// Elapsed seconds, checked between generations.
    Seconds(f64),
}

/// How the second objective is computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiversityObjective {
    /// Minimum cosine distance to the archive's cluster representatives.
    Representatives,
    /// A fixed value for every individual.
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub population: usize,
    pub latent_dim: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub eta_c: f64,
    pub eta_m: f64,
    pub budget: Budget,
    pub seed: u64,
    pub clustering: ClusterConfig,
    pub diversity: DiversityObjective,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            population: 100,
            latent_dim: 100,
            crossover_rate: 0.9,
            mutation_rate: 0.1,
            eta_c: 15.0,
            eta_m: 20.0,
            budget: Budget::Evaluations(10_000),
            seed: 0,
            clustering: ClusterConfig::default(),
            diversity: DiversityObjective::Representatives,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if self.population < 4 || !self.population.is_multiple_of(2) {
            return bad(format!("population must be even and at least 4, got {}", self.population));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) || !(0.0..=1.0).contains(&self.mutation_rate) {
            return bad("crossover and mutation rates must lie in [0, 1]".into());
        }
        if !(self.eta_c > 0.0 && self.eta_m > 0.0) {
            return bad("distribution indices must be positive".into());
        }
        if let Budget::Seconds(s) = self.budget {
            if !(s >= 0.0 && s.is_finite()) {
                return bad(format!("time budget must be a non-negative number of seconds, got {s}"));
            }
        }
        if self.latent_dim == 0 {
            return bad("latent dimension must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phenotype {
    pub image: Image,
    pub divergence: f64,
    pub diversity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genome: LatentVector,
    /// Present once the individual has been evaluated.
    pub phenotype: Option<Phenotype>,
    pub rank: usize,
    pub crowding: f64,
}

impl Individual {
    pub fn objectives(&self) -> Option<Objectives> {
        self.phenotype.as_ref().map(|p| [p.divergence, p.diversity])
    }
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub archive: Archive,
    pub evaluations: u64,
    pub generations: u64,
    pub elapsed: Duration,
}

/// Incremental driver of the search; each [`Search::step`] runs one generation.
pub struct Search<'a, G: ?Sized, A: ?Sized, B: ?Sized> {
    cfg: SearchConfig,
    gen: &'a G,
    model_a: &'a A,
    model_b: &'a B,
    rng: ChaCha8Rng,
    population: Vec<Individual>,
    archive: Archive,
    evaluations: u64,
    generation: u64,
    started: Instant,
    id_prefix: String,
}

impl<'a, G, A, B> Search<'a, G, A, B>
where
    G: Generator + ?Sized,
    A: Classifier + ?Sized,
    B: Classifier + ?Sized,
{
    /// Checks configuration and role compatibility; performs no evaluations.
    pub fn new(cfg: SearchConfig, gen: &'a G, model_a: &'a A, model_b: &'a B) -> Result<Self> {
        cfg.validate()?;
        if gen.latent_dim() != cfg.latent_dim {
            return Err(Error::Role(format!(
                "generator latent dimension {} differs from configured {}",
                gen.latent_dim(),
                cfg.latent_dim
            )));
        }
        if model_a.class_count() != model_b.class_count() {
            return Err(Error::Role(format!(
                "classifiers disagree on class count: {} vs {}",
                model_a.class_count(),
                model_b.class_count()
            )));
        }
        Ok(Search {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            gen,
            model_a,
            model_b,
            population: Vec::new(),
            archive: Archive::new(),
            evaluations: 0,
            generation: 0,
            started: Instant::now(),
            id_prefix: String::new(),
        })
    }

    /// Prefix for archived record ids, which end in the zero-padded evaluation index.
    pub fn with_id_prefix(mut self, prefix: impl Into<String>) -> Self {
        self.id_prefix = prefix.into();
        self
    }

    pub fn population(&self) -> &[Individual] {
        &self.population
    }

    pub fn archive(&self) -> &Archive {
        &self.archive
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    /// Number of completed generations, counting the initial population.
    pub fn generations(&self) -> u64 {
        self.generation
    }

    fn remaining(&self) -> Option<u64> {
        match self.cfg.budget {
            Budget::Evaluations(n) => Some(n.saturating_sub(self.evaluations)),
            Budget::Seconds(_) => None,
        }
    }

    pub fn exhausted(&self) -> bool {
        match self.cfg.budget {
            Budget::Evaluations(n) => self.evaluations >= n,
            Budget::Seconds(s) => self.started.elapsed().as_secs_f64() >= s,
        }
    }

    /// Runs one generation. Returns false without doing anything once the budget is spent.
    pub fn step(&mut self) -> Result<bool> {
        if self.exhausted() {
            return Ok(false);
        }
        let cap = self.remaining().map_or(usize::MAX, |r| r.min(usize::MAX as u64) as usize);
        if self.population.is_empty() {
            let genomes: Vec<LatentVector> = (0..self.cfg.population.min(cap))
                .map(|_| self.gen.bounds().sample(&mut self.rng))
                .collect();
            self.population = self.evaluate_batch(genomes, &[])?;
            self.assign_rank_and_crowding(None);
        } else {
            let reps = match self.cfg.diversity {
                DiversityObjective::Representatives => refresh_representatives(&self.archive, &self.cfg.clustering)?,
                DiversityObjective::Constant(_) => Vec::new(),
            };
            self.rescore_diversity(&reps)?;
            self.assign_rank_and_crowding(None);

            let mut genomes = self.make_offspring()?;
            genomes.truncate(cap);
            let offspring = self.evaluate_batch(genomes, &reps)?;
            self.archive.set_representatives(reps);
            self.population.extend(offspring);
            self.assign_rank_and_crowding(Some(self.cfg.population));
        }
        self.generation += 1;
        Ok(true)
    }

    pub fn run(mut self) -> Result<SearchOutcome> {
        while self.step()? {}
        Ok(SearchOutcome {
            elapsed: self.started.elapsed(),
            evaluations: self.evaluations,
            generations: self.generation,
            archive: self.archive,
        })
    }

    fn diversity_of(&self, image: &Image, reps: &[Image]) -> Result<f64> {
        match self.cfg.diversity {
            DiversityObjective::Representatives => diversity_fitness(image, reps),
            DiversityObjective::Constant(c) => Ok(c),
        }
    }

    /// Evaluates genomes in parallel, then archives triggering ones in index order.
    fn evaluate_batch(&mut self, genomes: Vec<LatentVector>, reps: &[Image]) -> Result<Vec<Individual>> {
        let base = self.evaluations;
        let (gen, a, b) = (self.gen, self.model_a, self.model_b);
        let results: Vec<Result<Evaluation>> = genomes
            .par_iter()
            .enumerate()
            .map(|(i, z)| {
                evaluate(z, gen, a, b, reps).map_err(|e| Error::Evaluation {
                    index: base + i as u64,
                    source: Box::new(e),
                })
            })
            .collect();
        let mut out = Vec::with_capacity(genomes.len());
        for (i, (genome, result)) in genomes.into_iter().zip(results).enumerate() {
            let mut eval = result?;
            let index = base + i as u64;
            eval.diversity = self.diversity_of(&eval.image, reps)?;
            if eval.triggering {
                let id = format!("{}{index:06}", self.id_prefix);
                let record = TriggeringRecord::from_evaluation(id, genome.clone(), &eval, self.generation, index);
                self.archive.insert(record)?;
            }
            out.push(Individual {
                genome,
                phenotype: Some(Phenotype {
                    image: eval.image,
                    divergence: eval.divergence,
                    diversity: eval.diversity,
                }),
                rank: 0,
                crowding: 0.0,
            });
            self.evaluations += 1;
        }
        Ok(out)
    }

    fn rescore_diversity(&mut self, reps: &[Image]) -> Result<()> {
        let scores: Vec<Result<f64>> = self
            .population
            .par_iter()
            .map(|ind| match &ind.phenotype {
                Some(p) => self.diversity_of(&p.image, reps),
                None => Err(Error::Invalid("population holds an unevaluated individual".into())),
            })
            .collect();
        for (ind, s) in self.population.iter_mut().zip(scores) {
            if let Some(p) = ind.phenotype.as_mut() {
                p.diversity = s?;
            }
        }
        Ok(())
    }

    /// Ranks the population; with `keep`, truncates it to the best `keep`
    /// by front order and then crowding within the last admitted front.
    fn assign_rank_and_crowding(&mut self, keep: Option<usize>) {
        let objs: Vec<Objectives> = self.population.iter().map(|i| i.objectives().unwrap_or([0.0; 2])).collect();
        let fronts = non_dominated_sort(&objs);
        let mut order = Vec::with_capacity(objs.len());
        for (r, front) in fronts.iter().enumerate() {
            let pts: Vec<Objectives> = front.iter().map(|&i| objs[i]).collect();
            let crowd = crowding_distance(&pts);
            let mut members: Vec<(usize, f64)> = front.iter().copied().zip(crowd).collect();
            members.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
            for (i, c) in members {
                self.population[i].rank = r;
                self.population[i].crowding = c;
                order.push(i);
            }
        }
        if let Some(k) = keep {
            if order.len() > k {
                order.truncate(k);
                order.sort_unstable();
                let mut slots: Vec<Option<Individual>> = std::mem::take(&mut self.population).into_iter().map(Some).collect();
                self.population = order.into_iter().filter_map(|i| slots[i].take()).collect();
            }
        }
    }

    fn make_offspring(&mut self) -> Result<Vec<LatentVector>> {
        let rank: Vec<usize> = self.population.iter().map(|i| i.rank).collect();
        let crowd: Vec<f64> = self.population.iter().map(|i| i.crowding).collect();
        let bounds = self.gen.bounds();
        let gene_p = 1.0 / self.cfg.latent_dim as f64;
        let mut children = Vec::with_capacity(self.cfg.population);
        while children.len() < self.cfg.population {
            let p1 = &self.population[tournament_select(&rank, &crowd, &mut self.rng)?].genome;
            let p2 = &self.population[tournament_select(&rank, &crowd, &mut self.rng)?].genome;
            let (c1, c2) = if self.rng.random_bool(self.cfg.crossover_rate) {
                sbx_crossover(p1, p2, self.cfg.eta_c, &mut self.rng, bounds)?
            } else {
                (p1.clone(), p2.clone())
            };
            for c in [c1, c2] {
                let c = if self.rng.random_bool(self.cfg.mutation_rate) {
                    polynomial_mutation(&c, self.cfg.eta_m, gene_p, &mut self.rng, bounds)?
                } else {
                    c
                };
                children.push(c);
            }
        }
        Ok(children)
    }
}

/// Runs the search to budget exhaustion and returns the archive.
pub fn run_search<G, A, B>(cfg: SearchConfig, gen: &G, model_a: &A, model_b: &B) -> Result<Archive>
where
    G: Generator + ?Sized,
    A: Classifier + ?Sized,
    B: Classifier + ?Sized,
{
    Ok(Search::new(cfg, gen, model_a, model_b)?.run()?.archive)
}
