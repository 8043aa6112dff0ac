/// Anything holding named trainable arrays.
///
/// Visiting order is fixed per type; flattening, optimizers and the weights
/// file all rely on it.
pub trait Parameters {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64]));

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64]));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, xs| n += xs.len());
        n
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit(&mut |_, xs| out.extend_from_slice(xs));
        out
    }

    /// Inverse of [`Parameters::flatten`]. Panics if the length differs.
    fn assign_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params(), "flat parameter length mismatch");
        let mut off = 0;
        self.visit_mut(&mut |_, xs| {
            xs.copy_from_slice(&flat[off..off + xs.len()]);
            off += xs.len();
        });
    }

    fn fill(&mut self, v: f64) {
        self.visit_mut(&mut |_, xs| xs.fill(v));
    }
}
