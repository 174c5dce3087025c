use std::collections::{BTreeSet, HashMap};

use crate::dynamics::{ChainShape, DynamicsChain};
use crate::{Error, Result};

/// Location of one chain instance's record in the parameter table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamSlot {
    pub offset: usize,
    pub len: usize,
}

/// Outcome of [`DynamicsRegistry::register_chain`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Registration {
    pub tag: u32,
    /// Index into the instance list (the per-cell `param_index`).
    pub instance: u32,
    /// `remap[old_tag] = new_tag` when the insertion shifted existing tags.
    pub remap: Option<Vec<u32>>,
}

/// Chain strings, their integer tags and the flat parameter table.
///
/// Tags are the positions of the chain strings in sorted order, so a given
/// set of chains always yields the same tags regardless of registration
/// order.
#[derive(Clone, Debug, Default)]
pub struct DynamicsRegistry {
    chains: Vec<String>,
    shapes: Vec<ChainShape>,
    tag_of: HashMap<String, u32>,
    params: Vec<f64>,
    slots: Vec<ParamSlot>,
    instance_tags: Vec<u32>,
    instance_of: HashMap<(String, Vec<u64>), u32>,
}

impl DynamicsRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.chains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chains.is_empty()
    }

    /// Registered chain strings in tag order.
    pub fn chains(&self) -> &[String] {
        &self.chains
    }

    pub fn tag_for(&self, chain: &str) -> Option<u32> {
        self.tag_of.get(chain).copied()
    }

    pub fn chain_for(&self, tag: u32) -> Option<&str> {
        self.chains.get(tag as usize).map(String::as_str)
    }

    pub fn shape(&self, tag: u32) -> Option<ChainShape> {
        self.shapes.get(tag as usize).copied()
    }

    pub fn params_table(&self) -> &[f64] {
        &self.params
    }

    pub fn num_instances(&self) -> usize {
        self.slots.len()
    }

    pub fn slot(&self, instance: u32) -> ParamSlot {
        self.slots[instance as usize]
    }

    #[inline]
    pub fn instance_params(&self, instance: u32) -> &[f64] {
        let s = self.slots[instance as usize];
        &self.params[s.offset..s.offset + s.len]
    }

    pub fn instance_tag(&self, instance: u32) -> u32 {
        self.instance_tags[instance as usize]
    }

    /// Reconstructs the chain of an instance from its tag and parameters.
    pub fn instance_chain(&self, instance: u32) -> Result<DynamicsChain> {
        let tag = self.instance_tag(instance);
        DynamicsChain::decode(&self.chains[tag as usize], self.instance_params(instance))
    }

    /// Registers a chain string without parameters. Idempotent.
    pub fn register_name(&mut self, chain: &str) -> Result<(u32, Option<Vec<u32>>)> {
        if let Some(tag) = self.tag_for(chain) {
            return Ok((tag, None));
        }
        let shape = ChainShape::parse(chain)?;
        let pos = self.chains.partition_point(|c| c.as_str() < chain);
        self.chains.insert(pos, chain.to_string());
        self.shapes.insert(pos, shape);
        let old_len = self.chains.len() - 1;
        let remap = if pos < old_len {
            let remap: Vec<u32> = (0..old_len as u32)
                .map(|t| if (t as usize) < pos { t } else { t + 1 })
                .collect();
            for t in &mut self.instance_tags {
                *t = remap[*t as usize];
            }
            Some(remap)
        } else {
            None
        };
        self.tag_of = self
            .chains
            .iter()
            .enumerate()
            .map(|(t, c)| (c.clone(), t as u32))
            .collect();
        Ok((pos as u32, remap))
    }

    /// Registers a chain instance: its string receives a tag and its
    /// parameters a record in the table. Identical instances are shared.
    pub fn register_chain(&mut self, chain: &DynamicsChain) -> Result<Registration> {
        let name = chain.chain_string();
        let (tag, remap) = self.register_name(&name)?;
        let values = chain.encode_params();
        let key = (name, values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        let instance = match self.instance_of.get(&key) {
            Some(&i) => i,
            None => {
                let slot = if values.is_empty() {
                    ParamSlot { offset: 0, len: 0 }
                } else {
                    let offset = self.params.len();
                    self.params.extend_from_slice(&values);
                    ParamSlot {
                        offset,
                        len: values.len(),
                    }
                };
                self.slots.push(slot);
                self.instance_tags.push(tag);
                let i = (self.slots.len() - 1) as u32;
                self.instance_of.insert(key, i);
                i
            }
        };
        Ok(Registration { tag, instance, remap })
    }
}

/// Chains compiled into a step kernel. Cells whose chain is outside the set
/// make the step fail before any cell is updated.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DispatchSet {
    chains: BTreeSet<String>,
}

impl DispatchSet {
    pub fn new<I, S>(chains: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let chains: BTreeSet<String> = chains.into_iter().map(Into::into).collect();
        if chains.is_empty() {
            return Err(Error::Config("dispatch set must contain at least one chain".into()));
        }
        for c in &chains {
            ChainShape::parse(c)?;
        }
        Ok(Self { chains })
    }

    /// Every chain currently registered.
    pub fn all(registry: &DynamicsRegistry) -> Result<Self> {
        Self::new(registry.chains().iter().cloned())
    }

    pub fn contains(&self, chain: &str) -> bool {
        self.chains.contains(chain)
    }

    pub fn chains(&self) -> impl Iterator<Item = &str> {
        self.chains.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.chains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chains.is_empty()
    }
}

/// Dispatch set resolved against a registry: the code path for every tag
/// that was selected, `None` for the others.
#[derive(Debug)]
pub struct StepKernel<'a> {
    pub(crate) registry: &'a DynamicsRegistry,
    pub(crate) shapes: Vec<Option<ChainShape>>,
}

impl<'a> StepKernel<'a> {
    pub fn new(registry: &'a DynamicsRegistry, dispatch: &DispatchSet) -> Self {
        let shapes = (0..registry.len() as u32)
            .map(|t| {
                let name = registry.chain_for(t).expect("tag in range");
                dispatch
                    .contains(name)
                    .then(|| registry.shape(t).expect("tag in range"))
            })
            .collect();
        Self { registry, shapes }
    }

    /// Fails with the chain string of the first tag that is not dispatched.
    pub fn check(&self, tags: &[u32]) -> Result<()> {
        for &t in tags {
            match self.shapes.get(t as usize) {
                Some(Some(_)) => {}
                Some(None) => {
                    return Err(Error::MissingModel(
                        self.registry.chain_for(t).expect("tag in range").to_string(),
                    ))
                }
                None => return Err(Error::Config(format!("tag {t} is not registered"))),
            }
        }
        Ok(())
    }
}
