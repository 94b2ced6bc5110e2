use std::collections::{HashMap, HashSet};
use std::sync::atomic::Ordering;

use super::{Element, Result, Tensor, TensorError};

/// Leaf gradients produced by [`Tensor::backward_grads`], keyed by tensor id.
#[derive(Debug, Clone, Default)]
pub struct GradStore<T> {
    grads: HashMap<usize, Vec<T>>,
}

impl<T: Element> GradStore<T> {
    pub fn get(&self, tensor: &Tensor<T>) -> Option<&[T]> {
        self.grads.get(&tensor.id()).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

impl<T: Element> Tensor<T> {
    /// Backpropagates from this scalar and adds the result to the gradient
    /// accumulator of every reachable parameter. The graph is freed afterwards.
    pub fn backward(&self) -> Result<()> {
        let (store, leaves) = self.run_backward()?;
        for leaf in leaves {
            if let Some(g) = store.get(&leaf) {
                leaf.accumulate_grad(g)?;
            }
        }
        Ok(())
    }

    /// Like [`Tensor::backward`] but returns the parameter gradients instead
    /// of accumulating them, leaving every parameter untouched.
    pub fn backward_grads(&self) -> Result<GradStore<T>> {
        Ok(self.run_backward()?.0)
    }

    fn run_backward(&self) -> Result<(GradStore<T>, Vec<Tensor<T>>)> {
        if self.numel() != 1 {
            return Err(TensorError::NotScalar(self.shape().to_vec()));
        }
        if self.0.freed.load(Ordering::Acquire) {
            return Err(TensorError::GraphFreed);
        }
        let order = self.topological_order();
        let mut pending: HashMap<usize, Vec<T>> = HashMap::new();
        pending.insert(self.id(), vec![T::one()]);
        let mut store = GradStore::default();
        let mut leaves = Vec::new();

        for t in order.iter().rev() {
            let Some(grad) = pending.remove(&t.id()) else {
                continue;
            };
            let node = t.0.node.lock().expect("graph lock poisoned").take();
            match node {
                Some(node) => {
                    t.0.freed.store(true, Ordering::Release);
                    let output = t.data();
                    let input_grads = node.op.backward(&grad, &output, &node.inputs);
                    drop(output);
                    debug_assert_eq!(input_grads.len(), node.inputs.len(), "{}", node.op.name());
                    for (input, g) in node.inputs.iter().zip(input_grads) {
                        let Some(g) = g else { continue };
                        if !input.tracks_grad() {
                            continue;
                        }
                        debug_assert_eq!(g.len(), input.numel(), "{}", node.op.name());
                        match pending.get_mut(&input.id()) {
                            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a = *a + b),
                            None => {
                                pending.insert(input.id(), g);
                            }
                        }
                    }
                }
                None if t.requires_grad() => {
                    store.grads.insert(t.id(), grad);
                    leaves.push(t.clone());
                }
                None => {}
            }
        }
        Ok((store, leaves))
    }

    /// Nodes reachable from `self`, each after all of its inputs.
    fn topological_order(&self) -> Vec<Tensor<T>> {
        let mut order = Vec::new();
        let mut visited = HashSet::new();
        let mut stack: Vec<(Tensor<T>, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(t.id()) {
                continue;
            }
            let inputs: Vec<Tensor<T>> =
                t.0.node
                    .lock()
                    .expect("graph lock poisoned")
                    .as_ref()
                    .map(|n| n.inputs.clone())
                    .unwrap_or_default();
            stack.push((t, true));
            for input in inputs {
                if input.tracks_grad() && !visited.contains(&input.id()) {
                    stack.push((input, false));
                }
            }
        }
        order
    }
}
