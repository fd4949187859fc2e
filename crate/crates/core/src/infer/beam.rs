use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::model::Emission;

/// A left-to-right scorer that beam search can drive.
pub trait StepModel {
    type State: Clone;

    fn start(&self) -> Result<Self::State>;

    /// Log-probabilities of the possible next emissions from `state`, with the
    /// successor state before the chosen emission is attached.
    fn step(&self, state: &Self::State) -> Result<(Self::State, Vec<(Emission, f64)>)>;

    /// Completes a successor state with the emission that was chosen.
    fn advance(&self, next: &Self::State, emission: Emission) -> Self::State;

    fn is_eos(&self, emission: Emission) -> bool;
}

#[derive(Clone, Debug)]
pub struct Hypothesis<S> {
    pub emissions: Vec<Emission>,
    pub logp: f64,
    pub state: S,
    /// Ended with EOS.
    pub finished: bool,
}

impl<S> Hypothesis<S> {
    /// Average log-probability per emitted step, EOS included.
    pub fn avg_logp(&self) -> f64 {
        if self.emissions.is_empty() {
            0.0
        } else {
            self.logp / self.emissions.len() as f64
        }
    }

    /// Emissions without the closing EOS.
    pub fn words(&self) -> &[Emission] {
        if self.finished {
            &self.emissions[..self.emissions.len() - 1]
        } else {
            &self.emissions
        }
    }
}

/// How decoding terminates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// Stop at EOS or after `max_len` steps.
    Eos { max_len: usize },
    /// EOS is never emitted; exactly `n` steps are taken.
    Fixed { n: usize },
}

struct Candidate {
    score: f64,
    emission: Emission,
    parent: usize,
    next: usize,
}

fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then(a.emission.cmp(&b.emission))
        .then(a.parent.cmp(&b.parent))
}

/// k-best search over cumulative log-probability. At each step every live
/// hypothesis is expanded. Its EOS extension is set aside as finished without
/// taking a beam slot; the `beam_size` best other candidates survive (ties go
/// to the smaller emission, then the earlier parent). The result is the
/// finished hypothesis with the best average per-step log-probability, or,
/// when nothing finished, the best hypothesis cut off at the length limit.
pub fn beam_search<M: StepModel>(
    model: &M,
    beam_size: usize,
    termination: Termination,
) -> Result<Hypothesis<M::State>> {
    if beam_size == 0 {
        return Err(Error::Contract("beam size must be at least 1".into()));
    }
    let (limit, fixed) = match termination {
        Termination::Eos { max_len } => (max_len, false),
        Termination::Fixed { n } => (n, true),
    };
    if limit == 0 {
        return Err(Error::Contract("length limit must be at least 1".into()));
    }
    let mut live = vec![Hypothesis {
        emissions: Vec::new(),
        logp: 0.0,
        state: model.start()?,
        finished: false,
    }];
    let mut finished: Vec<Hypothesis<M::State>> = Vec::new();
    for _ in 0..limit {
        let mut successors = Vec::with_capacity(live.len());
        let mut cands = Vec::new();
        for (p, hyp) in live.iter().enumerate() {
            let (next, options) = model.step(&hyp.state)?;
            for (emission, lp) in options {
                if lp == f64::NEG_INFINITY || lp.is_nan() {
                    continue;
                }
                if model.is_eos(emission) {
                    if !fixed {
                        let mut emissions = hyp.emissions.clone();
                        emissions.push(emission);
                        finished.push(Hypothesis {
                            emissions,
                            logp: hyp.logp + lp,
                            state: model.advance(&next, emission),
                            finished: true,
                        });
                    }
                    continue;
                }
                cands.push(Candidate {
                    score: hyp.logp + lp,
                    emission,
                    parent: p,
                    next: successors.len(),
                });
            }
            successors.push(next);
        }
        cands.sort_by(rank);
        cands.truncate(beam_size);
        live = cands
            .into_iter()
            .map(|c| {
                let parent = &live[c.parent];
                let mut emissions = parent.emissions.clone();
                emissions.push(c.emission);
                Hypothesis {
                    emissions,
                    logp: c.score,
                    state: model.advance(&successors[c.next], c.emission),
                    finished: false,
                }
            })
            .collect();
        if live.is_empty() {
            break;
        }
    }
    let pool = if finished.is_empty() { live } else { finished };
    pool.into_iter()
        .reduce(|best, h| {
            if h.avg_logp() > best.avg_logp() {
                h
            } else {
                best
            }
        })
        .ok_or_else(|| Error::Contract("every continuation has zero probability".into()))
}
