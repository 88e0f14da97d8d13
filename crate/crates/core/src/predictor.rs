use crate::dataset::ObservationSet;

/// Anything that scores a (model, instance) pair, by dataset index.
pub trait Predictor: Sync {
    fn predict(&self, model: usize, instance: usize) -> f64;
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn predict(&self, model: usize, instance: usize) -> f64 {
        (**self).predict(model, instance)
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn predict(&self, model: usize, instance: usize) -> f64 {
        (**self).predict(model, instance)
    }
}

/// Returns the true label; unobserved pairs score 0.5.
pub struct OraclePredictor<'a> {
    pub obs: &'a ObservationSet,
}

impl Predictor for OraclePredictor<'_> {
    fn predict(&self, model: usize, instance: usize) -> f64 {
        self.obs.score(model, instance).map_or(0.5, f64::from)
    }
}

pub struct ConstantPredictor(pub f64);

impl Predictor for ConstantPredictor {
    fn predict(&self, _: usize, _: usize) -> f64 {
        self.0
    }
}

/// Adapts a closure.
pub struct FnPredictor<F>(pub F);

impl<F: Fn(usize, usize) -> f64 + Sync> Predictor for FnPredictor<F> {
    fn predict(&self, model: usize, instance: usize) -> f64 {
        (self.0)(model, instance)
    }
}
