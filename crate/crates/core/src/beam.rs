//! Beam search over any step function that maps a state and the previous
//! token to a new state and next-token log-probabilities.

use std::cmp::Ordering;

pub trait Stepper {
    type State: Clone;

    /// Consume `prev` at position `pos` and return the new state with the
    /// log-probabilities of the token at `pos`.
    fn step(&self, state: &Self::State, prev: usize, pos: usize) -> (Self::State, Vec<f64>);
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamConfig {
    pub width: usize,
    /// Maximum number of tokens, END excluded.
    pub max_len: usize,
    /// Termination token. `None` means every hypothesis runs to `max_len`.
    pub end: Option<usize>,
    /// Tokens that may never be chosen.
    pub banned: Vec<usize>,
    /// Rank finished hypotheses by mean instead of total log-prob.
    pub length_norm: bool,
    /// END is not allowed before this many tokens.
    pub min_len: usize,
}

#[derive(Debug, Clone)]
pub struct Hypothesis<S> {
    /// Chosen tokens, END excluded.
    pub tokens: Vec<usize>,
    pub score: f64,
    /// State after the step that produced the last token (or END).
    pub state: S,
    pub ended: bool,
}

impl<S> Hypothesis<S> {
    pub fn truncated(&self) -> bool {
        !self.ended
    }

    fn rank(&self, length_norm: bool) -> f64 {
        if length_norm {
            self.score / (self.tokens.len() + usize::from(self.ended)).max(1) as f64
        } else {
            self.score
        }
    }
}

struct Alive<S> {
    tokens: Vec<usize>,
    score: f64,
    state: S,
    last: usize,
}

/// Run beam search from `state` with first input `start`.
///
/// `forced(pos)` pins the token at a position; a forced token contributes 0
/// to the score. Returned hypotheses are sorted best first; ties keep the
/// order in which they were found, which follows token id.
pub fn beam_search<T: Stepper>(
    stepper: &T,
    state: T::State,
    start: usize,
    cfg: &BeamConfig,
    forced: &dyn Fn(usize) -> Option<usize>,
) -> Vec<Hypothesis<T::State>> {
    assert!(cfg.width >= 1, "beam width must be at least 1");
    let mut alive = vec![Alive {
        tokens: Vec::new(),
        score: 0.0,
        state,
        last: start,
    }];
    let mut done: Vec<Hypothesis<T::State>> = Vec::new();
    for pos in 0..=cfg.max_len {
        if alive.is_empty() {
            break;
        }
        if pos == cfg.max_len {
            // Out of room: what is still alive ends here without END.
            for a in alive.drain(..) {
                done.push(Hypothesis {
                    tokens: a.tokens,
                    score: a.score,
                    state: a.state,
                    ended: cfg.end.is_none(),
                });
            }
            break;
        }
        // (parent, token, score) candidates
        let mut cands: Vec<(usize, usize, f64)> = Vec::new();
        let mut next_states = Vec::with_capacity(alive.len());
        for (k, a) in alive.iter().enumerate() {
            let (ns, lp) = stepper.step(&a.state, a.last, pos);
            match forced(pos) {
                Some(w) => cands.push((k, w, a.score)),
                None => {
                    for (w, &l) in lp.iter().enumerate() {
                        let early_end = Some(w) == cfg.end && pos < cfg.min_len;
                        if l.is_finite() && !early_end && !cfg.banned.contains(&w) {
                            cands.push((k, w, a.score + l));
                        }
                    }
                }
            }
            next_states.push(ns);
        }
        cands.sort_by(|x, y| y.2.partial_cmp(&x.2).unwrap_or(Ordering::Equal).then(x.0.cmp(&y.0)).then(x.1.cmp(&y.1)));
        cands.truncate(cfg.width);
        let mut next = Vec::with_capacity(cfg.width);
        for (k, w, score) in cands {
            let parent = &alive[k];
            if Some(w) == cfg.end {
                done.push(Hypothesis {
                    tokens: parent.tokens.clone(),
                    score,
                    state: next_states[k].clone(),
                    ended: true,
                });
            } else {
                let mut tokens = parent.tokens.clone();
                tokens.push(w);
                next.push(Alive {
                    tokens,
                    score,
                    state: next_states[k].clone(),
                    last: w,
                });
            }
        }
        alive = next;
        // Scores only fall, so nothing alive can overtake the best finished
        // hypothesis under total log-prob ranking.
        if !cfg.length_norm {
            let best_done = done.iter().map(|h| h.score).fold(f64::NEG_INFINITY, f64::max);
            let best_alive = alive.iter().map(|a| a.score).fold(f64::NEG_INFINITY, f64::max);
            if done.len() >= cfg.width && best_done >= best_alive {
                break;
            }
        }
    }
    done.sort_by(|a, b| {
        b.rank(cfg.length_norm)
            .partial_cmp(&a.rank(cfg.length_norm))
            .unwrap_or(Ordering::Equal)
    });
    done
}
