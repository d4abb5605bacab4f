use super::params::{Grads, ParamId, ParamStore};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamSlot {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// Adam with a step counter per parameter, so parameters that join training
/// late (for example in the joint phase) get a fresh bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub slots: Vec<Option<AdamSlot>>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            slots: vec![None; store.len()],
        }
    }

    /// Update every parameter in `ids` that has a gradient buffer.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads, ids: &[ParamId]) {
        if self.slots.len() < store.len() {
            self.slots.resize(store.len(), None);
        }
        for &id in ids {
            let Some(g) = grads.get(id) else { continue };
            let p = store.get_mut(id);
            let slot = self.slots[id.index()].get_or_insert_with(|| AdamSlot {
                step: 0,
                m: vec![0.0; p.len()],
                v: vec![0.0; p.len()],
            });
            slot.step += 1;
            let t = slot.step as i32;
            let c1 = 1.0 - self.beta1.powi(t);
            let c2 = 1.0 - self.beta2.powi(t);
            for (((w, &gi), m), v) in p.data.iter_mut().zip(g).zip(&mut slot.m).zip(&mut slot.v) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * gi;
                *v = self.beta2 * *v + (1.0 - self.beta2) * gi * gi;
                let mh = *m / c1;
                let vh = *v / c2;
                *w -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}
