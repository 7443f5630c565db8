use super::{NetError, Real};

/// One named parameter tensor, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry<T = f32> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<T>,
}

impl<T> ParamEntry<T> {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Ordered collection of named parameter tensors for one network component.
///
/// Iteration order is insertion order. `version` is bumped on every mutable
/// access so forward caches can detect that they were computed against
/// older parameter values.
#[derive(Clone, Debug)]
pub struct ParamSet<T = f32> {
    entries: Vec<ParamEntry<T>>,
    version: u64,
}

/// Compares names, shapes and values; the version is ignored.
impl<T: PartialEq> PartialEq for ParamSet<T> {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl<T> Default for ParamSet<T> {
    fn default() -> Self {
        Self {
            entries: Vec::new(),
            version: 0,
        }
    }
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        values: Vec<T>,
    ) -> Result<(), NetError> {
        let name = name.into();
        if self.entries.iter().any(|e| e.name == name) {
            return Err(NetError::DuplicateName(name));
        }
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(NetError::ShapeMismatch {
                node: name,
                expected,
                got: values.len(),
            });
        }
        self.entries.push(ParamEntry {
            name,
            shape,
            values,
        });
        self.version += 1;
        Ok(())
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn entries(&self) -> &[ParamEntry<T>] {
        &self.entries
    }

    /// Mutable access to the entries; bumps the version.
    pub fn entries_mut(&mut self) -> &mut [ParamEntry<T>] {
        self.version += 1;
        &mut self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry<T>> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub(crate) fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub(crate) fn values_at_mut(&mut self, index: usize) -> &mut [T] {
        // Gradient accumulators go through here; they are never the target
        // of a forward cache, so the version is left alone.
        &mut self.entries[index].values
    }

    /// Total number of scalars across all entries.
    pub fn numel(&self) -> usize {
        self.entries.iter().map(|e| e.values.len()).sum()
    }

    /// Same names and shapes, all values zero.
    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name.clone(),
                    shape: e.shape.clone(),
                    values: vec![T::zero(); e.values.len()],
                })
                .collect(),
            version: 0,
        }
    }

    fn check_layout(&self, other: &Self) -> Result<(), NetError> {
        if self.entries.len() != other.entries.len() {
            return Err(NetError::ShapeMismatch {
                node: "param set".into(),
                expected: self.entries.len(),
                got: other.entries.len(),
            });
        }
        for (a, b) in self.entries.iter().zip(&other.entries) {
            if a.name != b.name {
                return Err(NetError::MissingParam(b.name.clone()));
            }
            if a.values.len() != b.values.len() {
                return Err(NetError::ShapeMismatch {
                    node: a.name.clone(),
                    expected: a.values.len(),
                    got: b.values.len(),
                });
            }
        }
        Ok(())
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.check_layout(other).is_ok()
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<(), NetError> {
        self.check_layout(other)?;
        self.version += 1;
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            for (x, &y) in a.values.iter_mut().zip(&b.values) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, c: T) {
        self.version += 1;
        for e in &mut self.entries {
            for x in &mut e.values {
                *x *= c;
            }
        }
    }

    /// All values concatenated in entry order.
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.numel());
        for e in &self.entries {
            out.extend_from_slice(&e.values);
        }
        out
    }

    /// Overwrites all values from a flat slice laid out like [`flatten`](Self::flatten).
    pub fn assign_flat(&mut self, flat: &[T]) -> Result<(), NetError> {
        if flat.len() != self.numel() {
            return Err(NetError::ShapeMismatch {
                node: "param set".into(),
                expected: self.numel(),
                got: flat.len(),
            });
        }
        self.version += 1;
        let mut offset = 0;
        for e in &mut self.entries {
            let n = e.values.len();
            e.values.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name.clone(),
                    shape: e.shape.clone(),
                    values: e.values.iter().map(|&v| U::lit(v.as_f64())).collect(),
                })
                .collect(),
            version: 0,
        }
    }

    /// Concatenates two sets; names must not collide.
    pub fn merged(&self, other: &Self) -> Result<Self, NetError> {
        let mut out = self.clone();
        for e in &other.entries {
            out.push(e.name.clone(), e.shape.clone(), e.values.clone())?;
        }
        Ok(out)
    }

    /// Entries whose names start with `prefix`, in order.
    pub fn filtered(&self, prefix: &str) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .filter(|e| e.name.starts_with(prefix))
                .cloned()
                .collect(),
            version: 0,
        }
    }

    pub fn l2_norm(&self) -> T {
        self.entries
            .iter()
            .flat_map(|e| e.values.iter())
            .map(|&v| v * v)
            .sum::<T>()
            .sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.entries
            .iter()
            .flat_map(|e| e.values.iter())
            .fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T, NetError> {
        self.check_layout(other)?;
        Ok(self
            .entries
            .iter()
            .zip(&other.entries)
            .flat_map(|(a, b)| a.values.iter().zip(&b.values))
            .fold(T::zero(), |m, (&x, &y)| m.max((x - y).abs())))
    }

    pub fn all_finite(&self) -> bool {
        self.entries
            .iter()
            .all(|e| e.values.iter().all(|v| v.is_finite()))
    }
}

impl ParamSet<f32> {
    /// Bitwise equality of every value, names and shapes.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|(a, b)| {
                a.name == b.name
                    && a.shape == b.shape
                    && a.values.len() == b.values.len()
                    && a
                        .values
                        .iter()
                        .zip(&b.values)
                        .all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}
