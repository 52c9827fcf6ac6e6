//! Rank-based genetic algorithm over five 16-bit genes, one per cell
//! parameter `(a, b, c, d, u0)`.
//!
//! Genes are stored as plain binary and decoded by scaling onto a fixed
//! range. Mutation flips a single bit of one gene in its Gray-code
//! representation, so a mutation usually moves the phenotype a short
//! distance. Crossover cuts only between genes. Parents are drawn by linear
//! ranking and the best individual is carried over unchanged every
//! generation.
//!
//! Randomness comes from ChaCha8 seeded with `GaConfig::seed`: stream 0
//! initialises the population and stream `g + 1` produces the offspring of
//! generation `g`, drawn sequentially. Error evaluation runs in parallel but
//! never touches the RNG, so results do not depend on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NeuronParameters;

pub const GENE_COUNT: usize = 5;
pub const GENE_BITS: u32 = 16;
pub const GENE_MAX: u16 = u16::MAX;

pub const PARAMETER_NAMES: [&str; GENE_COUNT] = ["a", "b", "c", "d", "u0"];

/// Inclusive phenotype bounds per parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterRanges {
    pub a: (f64, f64),
    pub b: (f64, f64),
    pub c: (f64, f64),
    pub d: (f64, f64),
    pub u0: (f64, f64),
}

impl Default for ParameterRanges {
    fn default() -> Self {
        Self {
            a: (0.01, 0.1),
            b: (0.05, 0.3),
            c: (-65.0, -50.0),
            d: (0.05, 8.0),
            u0: (-15.0, 15.0),
        }
    }
}

impl ParameterRanges {
    pub fn to_array(&self) -> [(f64, f64); GENE_COUNT] {
        [self.a, self.b, self.c, self.d, self.u0]
    }

    pub fn from_array(x: [(f64, f64); GENE_COUNT]) -> Self {
        Self {
            a: x[0],
            b: x[1],
            c: x[2],
            d: x[3],
            u0: x[4],
        }
    }

    /// Every range collapsed onto the given point.
    pub fn collapsed(p: &NeuronParameters) -> Self {
        Self::from_array(p.to_array().map(|x| (x, x)))
    }

    /// Ranges may be degenerate (`min == max`) but never inverted.
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in PARAMETER_NAMES.iter().zip(self.to_array()) {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidConfig(format!("invalid range for {name}: [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn check(&self, p: &NeuronParameters) -> Result<()> {
        for ((name, (lo, hi)), value) in PARAMETER_NAMES.iter().zip(self.to_array()).zip(p.to_array()) {
            if !(value >= lo && value <= hi) {
                return Err(Error::ParameterRange {
                    name,
                    value,
                    min: lo,
                    max: hi,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Genome {
    pub genes: [u16; GENE_COUNT],
}

impl Genome {
    pub fn new(genes: [u16; GENE_COUNT]) -> Self {
        Self { genes }
    }

    pub fn random<R: Rng>(rng: &mut R) -> Self {
        let mut genes = [0u16; GENE_COUNT];
        for g in &mut genes {
            *g = rng.gen();
        }
        Self { genes }
    }
}

fn decode_gene(gene: u16, (lo, hi): (f64, f64)) -> f64 {
    if gene == GENE_MAX {
        return hi;
    }
    let frac = f64::from(gene) / f64::from(GENE_MAX);
    (lo + frac * (hi - lo)).min(hi)
}

/// Genotype to phenotype: `min + gene / 65535 * (max - min)` per parameter.
pub fn decode(genome: &Genome, ranges: &ParameterRanges) -> NeuronParameters {
    let bounds = ranges.to_array();
    NeuronParameters::from_array(std::array::from_fn(|k| decode_gene(genome.genes[k], bounds[k])))
}

/// Nearest-gene inverse of [`decode`].
pub fn encode(p: &NeuronParameters, ranges: &ParameterRanges) -> Result<Genome> {
    ranges.check(p)?;
    let bounds = ranges.to_array();
    let values = p.to_array();
    let genes = std::array::from_fn(|k| {
        let (lo, hi) = bounds[k];
        if hi == lo {
            return 0;
        }
        let scaled = ((values[k] - lo) / (hi - lo) * f64::from(GENE_MAX)).round();
        scaled.clamp(0.0, f64::from(GENE_MAX)) as u16
    });
    Ok(Genome { genes })
}

/// Reflected binary Gray code.
pub fn to_gray(x: u16) -> u16 {
    x ^ (x >> 1)
}

pub fn from_gray(g: u16) -> u16 {
    let mut x = g;
    let mut shift = 1;
    while shift < GENE_BITS {
        x ^= x >> shift;
        shift <<= 1;
    }
    x
}

/// Flips bit `bit` of gene `gene` in the Gray domain.
pub fn mutate_at(genome: &Genome, gene: usize, bit: u32) -> Genome {
    let mut out = *genome;
    out.genes[gene] = from_gray(to_gray(out.genes[gene]) ^ (1 << bit));
    out
}

/// One uniformly chosen gene, one uniformly chosen Gray bit.
pub fn mutate<R: Rng>(genome: &Genome, rng: &mut R) -> Genome {
    let gene = rng.gen_range(0..GENE_COUNT);
    let bit = rng.gen_range(0..GENE_BITS);
    mutate_at(genome, gene, bit)
}

/// Genes `[0, k)` from `first`, `[k, 5)` from `second`.
pub fn crossover_at(first: &Genome, second: &Genome, k: usize) -> Genome {
    let mut out = *first;
    out.genes[k..].copy_from_slice(&second.genes[k..]);
    out
}

/// Single cut point drawn uniformly from the four gene boundaries.
pub fn crossover<R: Rng>(first: &Genome, second: &Genome, rng: &mut R) -> Genome {
    crossover_at(first, second, rng.gen_range(1..GENE_COUNT))
}

/// Linear-ranking probabilities for ranks `1..=p` (best first):
/// `2 (p - k + 1) / (p (p + 1))`.
pub fn rank_probabilities(p: usize) -> Vec<f64> {
    let denom = (p * (p + 1)) as f64;
    (1..=p).map(|k| 2.0 * (p - k + 1) as f64 / denom).collect()
}

/// Precomputed linear-ranking sampler for one generation.
#[derive(Debug, Clone)]
pub struct RankSelector {
    /// Individual indices sorted by ascending error, ties by index.
    order: Vec<usize>,
    cumulative: Vec<f64>,
}

impl RankSelector {
    pub fn new(errors: &[f64]) -> Self {
        assert!(!errors.is_empty(), "cannot rank an empty population");
        let mut order: Vec<usize> = (0..errors.len()).collect();
        order.sort_by(|&x, &y| errors[x].total_cmp(&errors[y]));
        let mut acc = 0.0;
        let cumulative = rank_probabilities(errors.len())
            .into_iter()
            .map(|q| {
                acc += q;
                acc
            })
            .collect();
        Self { order, cumulative }
    }

    /// Index of the best individual.
    pub fn best(&self) -> usize {
        self.order[0]
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn select<R: Rng>(&self, rng: &mut R) -> usize {
        let x: f64 = rng.gen::<f64>() * self.cumulative[self.cumulative.len() - 1];
        let rank = self.cumulative.partition_point(|&c| c <= x).min(self.order.len() - 1);
        self.order[rank]
    }
}

/// Draws one parent index by linear ranking of `errors` (lower is better).
pub fn rank_select<R: Rng>(errors: &[f64], rng: &mut R) -> usize {
    RankSelector::new(errors).select(rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub seed: u64,
    pub ranges: ParameterRanges,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 1000,
            generations: 100,
            crossover_rate: 0.5,
            mutation_rate: 0.5,
            seed: 0,
            ranges: ParameterRanges::default(),
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::InvalidConfig(format!(
                "population must be at least 2, got {}",
                self.population
            )));
        }
        if self.generations == 0 {
            return Err(Error::InvalidConfig("at least one generation required".into()));
        }
        for (name, rate) in [("crossover", self.crossover_rate), ("mutation", self.mutation_rate)] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::InvalidConfig(format!("{name} rate {rate} outside [0, 1]")));
            }
        }
        self.ranges.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationStats {
    pub best_error: f64,
    pub mean_error: f64,
    pub best: NeuronParameters,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvolutionHistory {
    pub generations: Vec<GenerationStats>,
}

impl EvolutionHistory {
    pub fn best_errors(&self) -> Vec<f64> {
        self.generations.iter().map(|g| g.best_error).collect()
    }

    pub fn len(&self) -> usize {
        self.generations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub best: Genome,
    pub best_error: f64,
    pub history: EvolutionHistory,
}

fn evaluate<F>(population: &[Genome], ranges: &ParameterRanges, error_fn: &F) -> Result<Vec<f64>>
where
    F: Fn(&Genome) -> Result<f64> + Sync,
{
    let results: Vec<Result<f64>> = population.par_iter().map(error_fn).collect();
    results
        .into_iter()
        .zip(population)
        .map(|(r, g)| match r {
            Ok(e) if !e.is_nan() => Ok(e),
            Ok(e) => Err(Error::Fitness {
                params: decode(g, ranges),
                message: format!("error function returned {e}"),
            }),
            Err(Error::Fitness { params, message }) => Err(Error::Fitness { params, message }),
            Err(other) => Err(Error::Fitness {
                params: decode(g, ranges),
                message: other.to_string(),
            }),
        })
        .collect()
}

/// Runs the GA, minimising `error_fn`.
pub fn evolve<F>(cfg: &GaConfig, error_fn: F) -> Result<Evolution>
where
    F: Fn(&Genome) -> Result<f64> + Sync,
{
    cfg.validate()?;
    let p = cfg.population;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0);
    let mut population: Vec<Genome> = (0..p).map(|_| Genome::random(&mut rng)).collect();
    let mut history = EvolutionHistory::default();
    let mut best = (population[0], f64::INFINITY);

    for generation in 0..cfg.generations {
        let errors = evaluate(&population, &cfg.ranges, &error_fn)?;
        let selector = RankSelector::new(&errors);
        let elite = selector.best();
        if errors[elite] < best.1 || generation == 0 {
            best = (population[elite], errors[elite]);
        }
        history.generations.push(GenerationStats {
            best_error: errors[elite],
            mean_error: errors.iter().sum::<f64>() / p as f64,
            best: decode(&population[elite], &cfg.ranges),
        });
        if generation + 1 == cfg.generations {
            break;
        }

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(generation as u64 + 1);
        let mut next = Vec::with_capacity(p);
        next.push(population[elite]);
        while next.len() < p {
            let mut child = population[selector.select(&mut rng)];
            if rng.gen::<f64>() < cfg.crossover_rate {
                let other = population[selector.select(&mut rng)];
                child = crossover(&child, &other, &mut rng);
            }
            if rng.gen::<f64>() < cfg.mutation_rate {
                child = mutate(&child, &mut rng);
            }
            next.push(child);
        }
        population = next;
    }

    Ok(Evolution {
        best: best.0,
        best_error: best.1,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_ranges() {
        let r = ParameterRanges::default();
        assert_eq!(r.a, (0.01, 0.1));
        assert_eq!(r.b, (0.05, 0.3));
        assert_eq!(r.c, (-65.0, -50.0));
        assert_eq!(r.d, (0.05, 8.0));
        assert_eq!(r.u0, (-15.0, 15.0));
    }

    #[test]
    fn decode_endpoints_and_midpoint() {
        let r = ParameterRanges::default();
        let low = decode(&Genome::new([0; 5]), &r);
        let high = decode(&Genome::new([GENE_MAX; 5]), &r);
        assert_eq!(low.to_array(), [0.01, 0.05, -65.0, 0.05, -15.0]);
        assert_eq!(high.to_array(), [0.1, 0.3, -50.0, 8.0, 15.0]);
        let p = decode(&Genome::new([0, 13107, 0, 0, 0]), &r);
        assert!((p.b - 0.1).abs() < 1e-4);
    }

    #[test]
    fn encode_endpoints_and_errors() {
        let r = ParameterRanges::default();
        let p = NeuronParameters::new(0.01, 0.3, -65.0, 8.0, -15.0);
        assert_eq!(encode(&p, &r).unwrap().genes, [0, GENE_MAX, 0, GENE_MAX, 0]);
        let bad = NeuronParameters::new(0.2, 0.2, -55.0, 4.0, 0.0);
        assert!(matches!(encode(&bad, &r), Err(Error::ParameterRange { name: "a", .. })));
    }

    #[test]
    fn collapsed_ranges_decode_to_point() {
        let p = NeuronParameters::INTRINSICALLY_BURSTING;
        let r = ParameterRanges::collapsed(&p);
        assert_eq!(decode(&Genome::new([123, 0, 65535, 7, 9]), &r), p);
        assert_eq!(encode(&p, &r).unwrap(), Genome::default());
    }

    #[test]
    fn gray_code_values() {
        assert_eq!(to_gray(0), 0);
        assert_eq!(to_gray(5), 7);
        assert_eq!(from_gray(7), 5);
    }

    #[test]
    fn mutate_at_is_an_involution() {
        let g = Genome::new([0, 100, 200, 300, 400]);
        let m = mutate_at(&g, 0, 0);
        assert_eq!(m.genes, [1, 100, 200, 300, 400]);
        assert_eq!(mutate_at(&m, 0, 0), g);
        for gene in 0..GENE_COUNT {
            for bit in 0..GENE_BITS {
                assert_eq!(mutate_at(&mutate_at(&g, gene, bit), gene, bit), g);
            }
        }
    }

    #[test]
    fn crossover_definition() {
        let g1 = Genome::new([1, 2, 3, 4, 5]);
        let g2 = Genome::new([10, 20, 30, 40, 50]);
        assert_eq!(crossover_at(&g1, &g2, 2).genes, [1, 2, 30, 40, 50]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(crossover(&g1, &g1, &mut rng), g1);
    }

    #[test]
    fn rank_probabilities_small() {
        let q = rank_probabilities(3);
        assert!((q[0] - 0.5).abs() < 1e-15);
        assert!((q[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((q[2] - 1.0 / 6.0).abs() < 1e-15);
        assert!((rank_probabilities(1000).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_individual_always_selected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(rank_select(&[42.0], &mut rng), 0);
        }
    }

    #[test]
    fn rank_ties_keep_index_order() {
        let s = RankSelector::new(&[2.0, 1.0, 1.0, 0.5]);
        assert_eq!(s.order(), &[3, 1, 2, 0]);
    }

    #[test]
    fn config_validation() {
        assert!(GaConfig::default().validate().is_ok());
        let bad = [
            GaConfig { population: 1, ..GaConfig::default() },
            GaConfig { generations: 0, ..GaConfig::default() },
            GaConfig { crossover_rate: 1.5, ..GaConfig::default() },
            GaConfig { mutation_rate: -0.1, ..GaConfig::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn evolve_propagates_failures_with_phenotype() {
        let cfg = GaConfig {
            population: 4,
            generations: 2,
            ..GaConfig::default()
        };
        let err = evolve(&cfg, |_| Err(Error::InvalidConfig("boom".into()))).unwrap_err();
        match err {
            Error::Fitness { params, message } => {
                assert!(message.contains("boom"));
                assert!(ParameterRanges::default().check(&params).is_ok());
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(evolve(&cfg, |_| Ok(f64::NAN)), Err(Error::Fitness { .. })));
    }
}
