//! Global-best particle swarm state and update rules.
//!
//! Plain inertia-weight PSO over the position vectors of the block encoding.
//! Velocities are clamped to the configured range on every update; positions
//! are left unclamped so the dynamics are not distorted (components are
//! clamped later, at decode time). Fitness bookkeeping is strict: a particle's
//! best and the swarm best only move on a strictly greater fitness, which is
//! what lets the surrogate assign zero fitness to filtered candidates without
//! disturbing any real best.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{EncodingConfig, PositionVector};
use crate::Scalar;

/// Swarm hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "F: crate::Scalar"))]
pub struct PsoConfig<F> {
    pub inertia_weight: F,
    pub cognitive_coeff: F,
    pub social_coeff: F,
    pub velocity_min: F,
    pub velocity_max: F,
    pub population_size: usize,
    /// Total generations including the fully evaluated initial one.
    pub generations: usize,
    pub rng_seed: u64,
}

impl<F: Scalar> Default for PsoConfig<F> {
    fn default() -> Self {
        Self {
            inertia_weight: F::from_f64_lossy(0.7298),
            cognitive_coeff: F::from_f64_lossy(1.49618),
            social_coeff: F::from_f64_lossy(1.49618),
            velocity_min: F::from_f64_lossy(-10.5),
            velocity_max: F::from_f64_lossy(10.5),
            population_size: 30,
            generations: 50,
            rng_seed: 1,
        }
    }
}

impl<F: Scalar> PsoConfig<F> {
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.inertia_weight < F::zero() || self.inertia_weight > F::one() {
            return Err("inertia weight must be within [0, 1]");
        }
        if self.velocity_min >= self.velocity_max {
            return Err("velocity_min must be below velocity_max");
        }
        if self.population_size == 0 {
            return Err("population_size must be at least 1");
        }
        if self.generations == 0 {
            return Err("generations must be at least 1");
        }
        Ok(())
    }
}

/// Fitness value marking a personal best that has never been evaluated; any
/// real fitness in [0, 1] strictly exceeds it.
pub fn unevaluated_fitness<F: Scalar>() -> F {
    -F::one()
}

/// One particle: current state plus its personal-best record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle<F> {
    pub id: usize,
    pub position: PositionVector<F>,
    pub velocity: Vec<F>,
    pub pbest_position: PositionVector<F>,
    pub pbest_fitness: F,
}

/// The swarm plus the best-so-far solution across all particles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Swarm<F> {
    pub particles: Vec<Particle<F>>,
    pub gbest_position: PositionVector<F>,
    pub gbest_fitness: F,
    /// Index of the last completed generation.
    pub generation: usize,
}

/// Draws the initial population: positions uniform over the encoded component
/// range, velocities uniform over the velocity range, personal bests at the
/// initial positions with the unevaluated sentinel fitness.
pub fn initialize_swarm<F: Scalar, R: Rng>(
    cfg: &PsoConfig<F>,
    enc: &EncodingConfig,
    rng: &mut R,
) -> Swarm<F> {
    let (lo, hi) = enc.component_range::<F>();
    let (lo, hi) = (lo.to_f64().unwrap(), hi.to_f64().unwrap());
    let (vlo, vhi) = (
        cfg.velocity_min.to_f64().unwrap(),
        cfg.velocity_max.to_f64().unwrap(),
    );
    let particles: Vec<Particle<F>> = (0..cfg.population_size)
        .map(|id| {
            let position: Vec<F> = (0..enc.max_layers)
                .map(|_| F::from_f64_lossy(rng.gen_range(lo..=hi)))
                .collect();
            let velocity: Vec<F> = (0..enc.max_layers)
                .map(|_| F::from_f64_lossy(rng.gen_range(vlo..=vhi)))
                .collect();
            Particle {
                id,
                position: PositionVector(position.clone()),
                velocity,
                pbest_position: PositionVector(position),
                pbest_fitness: unevaluated_fitness(),
            }
        })
        .collect();
    let gbest_position = particles[0].position.clone();
    Swarm {
        particles,
        gbest_position,
        gbest_fitness: unevaluated_fitness(),
        generation: 0,
    }
}

/// Applies the velocity and position update to one particle.
///
/// Per dimension `d`, with fresh `e1, e2 ~ U(0,1)` drawn per dimension:
/// `v' = w*v + c1*e1*(pbest_d - x_d) + c2*e2*(gbest_d - x_d)`, clamped to the
/// velocity range, then `x' = x + v'`.
pub fn update_particle<F: Scalar, R: Rng>(
    particle: &mut Particle<F>,
    gbest: &PositionVector<F>,
    cfg: &PsoConfig<F>,
    rng: &mut R,
) {
    debug_assert_eq!(particle.position.len(), gbest.len());
    debug_assert_eq!(particle.position.len(), particle.velocity.len());
    for d in 0..particle.velocity.len() {
        let e1 = F::from_f64_lossy(rng.gen_range(0.0..1.0));
        let e2 = F::from_f64_lossy(rng.gen_range(0.0..1.0));
        let x = particle.position.0[d];
        let v = particle.velocity[d];
        let cognitive = cfg.cognitive_coeff * e1 * (particle.pbest_position.0[d] - x);
        let social = cfg.social_coeff * e2 * (gbest.0[d] - x);
        let mut v_next = cfg.inertia_weight * v + cognitive + social;
        if v_next < cfg.velocity_min {
            v_next = cfg.velocity_min;
        } else if v_next > cfg.velocity_max {
            v_next = cfg.velocity_max;
        }
        particle.velocity[d] = v_next;
        particle.position.0[d] = x + v_next;
    }
}

/// Records a fitness for a particle: the personal best moves only on a
/// strictly greater fitness. Returns true when the personal best moved.
pub fn record_fitness<F: Scalar>(particle: &mut Particle<F>, fitness: F) -> bool {
    debug_assert!(fitness >= F::zero() && fitness <= F::one());
    if fitness > particle.pbest_fitness {
        particle.pbest_fitness = fitness;
        particle.pbest_position = particle.position.clone();
        true
    } else {
        false
    }
}

impl<F: Scalar> Swarm<F> {
    /// Pulls the swarm best up to the largest personal best; strict
    /// comparison, first particle wins ties.
    pub fn refresh_gbest(&mut self) {
        for p in &self.particles {
            if p.pbest_fitness > self.gbest_fitness {
                self.gbest_fitness = p.pbest_fitness;
                self.gbest_position = p.pbest_position.clone();
            }
        }
    }
}
