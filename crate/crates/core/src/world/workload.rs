//! Request generators. Arrivals stop at the end of the run window.

use crate::rng::Distribution;
use crate::scenario::{ms, think_distribution, WorkloadSpec};
use crate::sim::SimTime;

use super::{Ev, Source, World};

impl World {
    pub(crate) fn start_workload(&mut self) {
        match self.sc.workload.clone() {
            WorkloadSpec::ClosedLoop { users, .. } => {
                for u in 0..users {
                    self.user_thinks(u);
                }
            }
            WorkloadSpec::OpenLoop { .. } => self.schedule_open(),
            WorkloadSpec::Spike { start_ms, duration_ms, .. } => {
                self.schedule_open();
                self.at(ms(start_ms), Ev::RateChange);
                self.at(ms(start_ms + duration_ms), Ev::RateChange);
            }
            WorkloadSpec::PeriodicUpdate { sources, period_ms, .. } => {
                for s in 0..sources {
                    let offset = period_ms * f64::from(s) / f64::from(sources);
                    self.at(ms(offset), Ev::Arrival { source: s, generation: 0 });
                }
            }
        }
    }

    fn current_rate(&self) -> (f64, bool) {
        let now = self.now();
        match &self.sc.workload {
            WorkloadSpec::OpenLoop { rate_per_s, deterministic, .. } => (*rate_per_s, *deterministic),
            WorkloadSpec::Spike { base_rate_per_s, multiplier, start_ms, duration_ms, .. } => {
                let spiking = now >= ms(*start_ms) && now < ms(start_ms + duration_ms);
                (if spiking { base_rate_per_s * multiplier } else { *base_rate_per_s }, false)
            }
            _ => (0.0, false),
        }
    }

    fn schedule_open(&mut self) {
        let (rate, deterministic) = self.current_rate();
        if rate <= 0.0 {
            return;
        }
        let mean_ms = 1_000.0 / rate;
        let gap = if deterministic {
            ms(mean_ms)
        } else {
            self.streams.workload.draw(&Distribution::Exponential { mean_ms })
        };
        let generation = self.arrival_generation;
        self.after(gap.max(SimTime::from_micros(1)), Ev::Arrival { source: 0, generation });
    }

    pub(crate) fn on_rate_change(&mut self) {
        self.arrival_generation += 1;
        self.schedule_open();
    }

    pub(crate) fn on_arrival(&mut self, source: u32, generation: u64) {
        if self.now() >= self.duration {
            return;
        }
        match self.sc.workload.clone() {
            WorkloadSpec::ClosedLoop { .. } => {
                let class = self.pick_class();
                self.new_trace(class, Source::User(source));
            }
            WorkloadSpec::OpenLoop { .. } | WorkloadSpec::Spike { .. } => {
                if generation != self.arrival_generation {
                    return;
                }
                let class = self.pick_class();
                self.new_trace(class, Source::Open);
                self.schedule_open();
            }
            WorkloadSpec::PeriodicUpdate { period_ms, .. } => {
                self.new_trace(0, Source::Periodic(source));
                self.after(ms(period_ms), Ev::Arrival { source, generation });
            }
        }
    }

    fn pick_class(&mut self) -> usize {
        if self.class_weights.len() == 1 {
            return 0;
        }
        self.streams.workload.weighted(&self.class_weights)
    }

    /// Closed loop: the user's next request follows a think time.
    pub(crate) fn user_thinks(&mut self, user: u32) {
        if let WorkloadSpec::ClosedLoop { think_ms, think, .. } = self.sc.workload {
            let d = self.streams.think.draw(&think_distribution(think_ms, think));
            self.after(d, Ev::Arrival { source: user, generation: 0 });
        }
    }
}
