//! Host-provided behavior: service FB bindings and builtin algorithms.

use std::collections::HashMap;
use std::sync::Arc;

use crate::model::{EnvMut, EvalError, Value};

use super::store::VarView;

/// Construction context handed to a service factory.
#[derive(Debug, Clone)]
pub struct InstanceInit {
    pub instance: String,
    pub type_name: String,
    pub params: Vec<(String, Value)>,
}

impl InstanceInit {
    pub fn param(&self, name: &str) -> Option<&Value> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }
}

/// Behavior of a Service Interface FB. Output events requested through
/// [`ServiceIo::fire`] are emitted in order after the call returns.
pub trait ServiceBehavior {
    /// Period of the instance's cyclic timer, if it has one.
    fn timer_period_ms(&self) -> Option<u64> {
        None
    }

    fn on_event(&mut self, _event: &str, _io: &mut ServiceIo<'_>) -> Result<(), EvalError> {
        Ok(())
    }

    fn on_timer(&mut self, _io: &mut ServiceIo<'_>) -> Result<(), EvalError> {
        Ok(())
    }
}

/// Variable access for a service invocation.
pub struct ServiceIo<'a> {
    pub(crate) now: u64,
    pub(crate) instance: &'a str,
    pub(crate) vars: VarView<'a>,
    pub(crate) outputs: &'a HashMap<String, usize>,
    pub(crate) fired: Vec<usize>,
}

impl ServiceIo<'_> {
    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn instance(&self) -> &str {
        self.instance
    }

    pub fn get(&self, name: &str) -> Option<Value> {
        crate::model::Env::get(&self.vars, name)
    }

    pub fn get_f64(&self, name: &str) -> Option<f64> {
        self.get(name).and_then(|v| v.as_f64())
    }

    pub fn get_i64(&self, name: &str) -> Option<i64> {
        match self.get(name)? {
            Value::Int(i) => Some(i),
            _ => None,
        }
    }

    pub fn set(&mut self, name: &str, value: Value) -> Result<(), EvalError> {
        self.vars.set(name, value)
    }

    pub fn fire(&mut self, event: &str) -> Result<(), EvalError> {
        let idx = *self.outputs.get(event).ok_or_else(|| EvalError::Unbound(event.to_string()))?;
        self.fired.push(idx);
        Ok(())
    }
}

pub type AlgorithmFn = Arc<dyn Fn(&mut dyn EnvMut) -> Result<(), EvalError> + Send + Sync>;
pub type ServiceFactory = Box<dyn Fn(&InstanceInit) -> Box<dyn ServiceBehavior>>;

/// Name-keyed host behaviors resolved at instantiation.
#[derive(Default)]
pub struct BuiltinRegistry {
    services: HashMap<String, ServiceFactory>,
    algorithms: HashMap<String, AlgorithmFn>,
}

impl BuiltinRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_service(
        &mut self,
        name: &str,
        factory: impl Fn(&InstanceInit) -> Box<dyn ServiceBehavior> + 'static,
    ) -> &mut Self {
        self.services.insert(name.to_string(), Box::new(factory));
        self
    }

    pub fn register_algorithm(
        &mut self,
        name: &str,
        f: impl Fn(&mut dyn EnvMut) -> Result<(), EvalError> + Send + Sync + 'static,
    ) -> &mut Self {
        self.algorithms.insert(name.to_string(), Arc::new(f));
        self
    }

    pub(crate) fn service(&self, name: &str) -> Option<&ServiceFactory> {
        self.services.get(name)
    }

    pub(crate) fn algorithm(&self, name: &str) -> Option<&AlgorithmFn> {
        self.algorithms.get(name)
    }
}

impl std::fmt::Debug for BuiltinRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut s: Vec<_> = self.services.keys().collect();
        s.sort();
        let mut a: Vec<_> = self.algorithms.keys().collect();
        a.sort();
        f.debug_struct("BuiltinRegistry").field("services", &s).field("algorithms", &a).finish()
    }
}
