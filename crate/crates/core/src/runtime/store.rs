//! Compiled per-type layout and the slot-indexed variable store.

use std::collections::HashMap;
use std::sync::Arc;

use crate::model::{
    AlgorithmBody, Direction, Env, EnvMut, EvalError, Expr, FbBody, FbTypeDecl, PortKind, Stmt,
    Value, ValueType,
};

use super::builtins::{AlgorithmFn, BuiltinRegistry};
use super::RuntimeError;

pub(crate) enum CompiledAlgorithm {
    Statements(Vec<Stmt>),
    Builtin(AlgorithmFn),
}

pub(crate) struct CompiledState {
    pub name: Arc<str>,
    pub actions: Vec<(Option<usize>, Option<usize>)>,
    pub transitions: Vec<CompiledTransition>,
}

pub(crate) struct CompiledTransition {
    pub target: usize,
    pub trigger: Option<usize>,
    pub guard: Option<Expr>,
}

pub(crate) struct EventPort {
    pub name: Arc<str>,
    pub direction: Direction,
    pub with: Vec<usize>,
}

/// Slot layout shared by every instance of one FB type. Data ports and
/// internal variables share one slot space.
pub(crate) struct TypeLayout {
    pub slots: HashMap<String, usize>,
    pub slot_names: Vec<Arc<str>>,
    pub slot_types: Vec<ValueType>,
    pub initial: Vec<Value>,
    pub events: Vec<EventPort>,
    pub event_index: HashMap<String, usize>,
    pub output_events: HashMap<String, usize>,
    pub states: Vec<CompiledState>,
    pub algorithms: Vec<CompiledAlgorithm>,
    pub service_binding: Option<String>,
}

impl TypeLayout {
    pub fn compile(decl: &FbTypeDecl, builtins: &BuiltinRegistry) -> Result<Self, RuntimeError> {
        let mut slots = HashMap::new();
        let mut slot_names = Vec::new();
        let mut slot_types = Vec::new();
        let mut initial = Vec::new();
        let mut add_slot = |name: &str, ty: ValueType, init: &Value| {
            slots.insert(name.to_string(), slot_names.len());
            slot_names.push(Arc::<str>::from(name));
            slot_types.push(ty);
            initial.push(init.clone().coerce(ty).unwrap_or_else(|| ty.default_value()));
        };
        for p in &decl.interface {
            if let PortKind::Data { ty, initial } = &p.kind {
                add_slot(&p.name, *ty, initial);
            }
        }
        for v in &decl.vars {
            add_slot(&v.name, v.ty, &v.initial);
        }

        let mut events = Vec::new();
        let mut event_index = HashMap::new();
        let mut output_events = HashMap::new();
        for p in decl.interface.iter().filter(|p| p.is_event()) {
            let idx = events.len();
            event_index.insert(p.name.clone(), idx);
            if p.direction == Direction::Out {
                output_events.insert(p.name.clone(), idx);
            }
            events.push(EventPort {
                name: Arc::from(p.name.as_str()),
                direction: p.direction,
                with: p.with().iter().filter_map(|w| slots.get(w).copied()).collect(),
            });
        }

        let mut states = Vec::new();
        let mut algorithms = Vec::new();
        let mut service_binding = None;
        match &decl.body {
            FbBody::Service { binding } => service_binding = Some(binding.clone()),
            FbBody::Basic { ecc, algorithms: algs } => {
                let mut alg_index = HashMap::new();
                for a in algs {
                    alg_index.insert(a.name.as_str(), algorithms.len());
                    algorithms.push(match &a.body {
                        AlgorithmBody::Statements(s) => CompiledAlgorithm::Statements(s.clone()),
                        AlgorithmBody::Builtin(host) => CompiledAlgorithm::Builtin(
                            builtins.algorithm(host).cloned().ok_or_else(|| RuntimeError::MissingBuiltin {
                                instance: decl.name.clone(),
                                binding: host.clone(),
                            })?,
                        ),
                    });
                }
                let state_index: HashMap<&str, usize> =
                    ecc.states.iter().enumerate().map(|(i, s)| (s.name.as_str(), i)).collect();
                for s in &ecc.states {
                    states.push(CompiledState {
                        name: Arc::from(s.name.as_str()),
                        actions: s
                            .actions
                            .iter()
                            .map(|a| {
                                (
                                    a.algorithm.as_deref().and_then(|n| alg_index.get(n).copied()),
                                    a.output.as_deref().and_then(|n| output_events.get(n).copied()),
                                )
                            })
                            .collect(),
                        transitions: Vec::new(),
                    });
                }
                for t in &ecc.transitions {
                    let (Some(&src), Some(&dst)) =
                        (state_index.get(t.source.as_str()), state_index.get(t.target.as_str()))
                    else {
                        continue;
                    };
                    let guard = (t.guard != Expr::Lit(Value::Bool(true))).then(|| t.guard.clone());
                    states[src].transitions.push(CompiledTransition {
                        target: dst,
                        trigger: t.trigger.as_deref().and_then(|n| event_index.get(n).copied()),
                        guard,
                    });
                }
            }
        }

        Ok(TypeLayout {
            slots,
            slot_names,
            slot_types,
            initial,
            events,
            event_index,
            output_events,
            states,
            algorithms,
            service_binding,
        })
    }
}

/// Borrowed view of one instance's variables.
pub struct VarView<'a> {
    pub(crate) layout: &'a TypeLayout,
    pub(crate) values: &'a mut [Value],
}

impl Env for VarView<'_> {
    fn get(&self, name: &str) -> Option<Value> {
        self.layout.slots.get(name).map(|&i| self.values[i].clone())
    }
}

impl EnvMut for VarView<'_> {
    fn set(&mut self, name: &str, value: Value) -> Result<(), EvalError> {
        let &i = self.layout.slots.get(name).ok_or_else(|| EvalError::Unbound(name.to_string()))?;
        let ty = self.layout.slot_types[i];
        let found = value.value_type();
        self.values[i] = value
            .coerce(ty)
            .ok_or_else(|| EvalError::TypeError(format!("cannot store {found} into `{name}` ({ty})")))?;
        Ok(())
    }
}
