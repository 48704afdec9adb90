//! Species, reactions, networks and stochastic mass-action propensities.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Index, IndexMut};

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CrnError {
    #[error("dimension mismatch: expected {expected} species, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("reactant and product vectors equal")]
    ReactantsEqualProducts,
    #[error("rate constant must be positive and finite, got {0}")]
    InvalidRate(String),
    #[error("reaction {0} duplicates an earlier reaction")]
    DuplicateReaction(usize),
    #[error("duplicate species identifier `{0}`")]
    DuplicateSpecies(String),
    #[error("species identifiers must be nonempty")]
    EmptySpeciesName,
    #[error("unknown species `{0}`")]
    UnknownSpecies(String),
    #[error("propensity of reaction {reaction} is not finite")]
    NumericOverflow { reaction: usize },
}

/// Ordered set of species identifiers with reverse lookup.
#[derive(Debug, Clone, Default)]
pub struct SpeciesTable {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl SpeciesTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<I, S>(names: I) -> Result<Self, CrnError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut table = Self::new();
        for name in names {
            let name = name.into();
            if name.is_empty() {
                return Err(CrnError::EmptySpeciesName);
            }
            if table.index.contains_key(&name) {
                return Err(CrnError::DuplicateSpecies(name));
            }
            table.insert(&name);
        }
        Ok(table)
    }

    /// Returns the index of `name`, registering it at the end if absent.
    pub fn insert(&mut self, name: &str) -> usize {
        assert!(!name.is_empty(), "species identifiers must be nonempty");
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), i);
        i
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

impl PartialEq for SpeciesTable {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names
    }
}

impl Eq for SpeciesTable {}

/// Nonnegative count per species, indexed by [`SpeciesTable`] position.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct CountVector(Vec<u64>);

impl CountVector {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, u64> {
        self.0.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    /// Componentwise `self <= other`.
    pub fn le(&self, other: &CountVector) -> bool {
        assert_eq!(self.dim(), other.dim(), "count vector dimension mismatch");
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    pub fn into_vec(self) -> Vec<u64> {
        self.0
    }
}

impl From<Vec<u64>> for CountVector {
    fn from(counts: Vec<u64>) -> Self {
        Self(counts)
    }
}

impl<const N: usize> From<[u64; N]> for CountVector {
    fn from(counts: [u64; N]) -> Self {
        Self(counts.to_vec())
    }
}

impl Index<usize> for CountVector {
    type Output = u64;

    fn index(&self, i: usize) -> &u64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for CountVector {
    fn index_mut(&mut self, i: usize) -> &mut u64 {
        &mut self.0[i]
    }
}

impl fmt::Display for CountVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// A reaction `(r, p, k)` over a fixed species dimension.
///
/// Arity, net effect and the sparse reactant list are derived once at
/// construction and stay consistent with `r` and `p`.
#[derive(Debug, Clone)]
pub struct Reaction<T> {
    reactants: CountVector,
    products: CountVector,
    rate: T,
    arity: u64,
    net: Vec<i64>,
    reactant_terms: Vec<(usize, u64)>,
}

impl<T: Scalar> Reaction<T> {
    pub fn new(reactants: CountVector, products: CountVector, rate: T) -> Result<Self, CrnError> {
        if reactants.dim() != products.dim() {
            return Err(CrnError::DimensionMismatch {
                expected: reactants.dim(),
                found: products.dim(),
            });
        }
        if reactants == products {
            return Err(CrnError::ReactantsEqualProducts);
        }
        if !(rate.is_finite_value() && rate > T::zero()) {
            return Err(CrnError::InvalidRate(format!("{rate:?}")));
        }
        let arity = reactants.iter().sum();
        let net = reactants
            .iter()
            .zip(products.iter())
            .map(|(&r, &p)| p as i64 - r as i64)
            .collect();
        let reactant_terms = reactants
            .iter()
            .enumerate()
            .filter(|(_, &r)| r > 0)
            .map(|(i, &r)| (i, r))
            .collect();
        Ok(Self {
            reactants,
            products,
            rate,
            arity,
            net,
            reactant_terms,
        })
    }

    pub fn reactants(&self) -> &CountVector {
        &self.reactants
    }

    pub fn products(&self) -> &CountVector {
        &self.products
    }

    pub fn rate(&self) -> &T {
        &self.rate
    }

    pub fn arity(&self) -> u64 {
        self.arity
    }

    /// `p - r`.
    pub fn net_effect(&self) -> &[i64] {
        &self.net
    }

    pub fn dim(&self) -> usize {
        self.reactants.dim()
    }

    /// Species indices with nonzero reactant stoichiometry, with their coefficients.
    pub fn reactant_terms(&self) -> &[(usize, u64)] {
        &self.reactant_terms
    }

    pub fn is_applicable(&self, state: &CountVector) -> bool {
        self.reactants.le(state)
    }

    pub fn is_catalyst(&self, species: usize) -> bool {
        let r = self.reactants[species];
        r > 0 && r == self.products[species]
    }

    /// `x + Δρ`. The reaction must be applicable.
    pub fn apply(&self, state: &CountVector) -> CountVector {
        let mut next = state.clone();
        self.apply_in_place(&mut next);
        next
    }

    pub fn apply_in_place(&self, state: &mut CountVector) {
        assert_eq!(state.dim(), self.dim(), "state dimension mismatch");
        debug_assert!(self.is_applicable(state), "reaction applied to a state it is not applicable to");
        for (count, &delta) in state.0.iter_mut().zip(&self.net) {
            *count = count.wrapping_add_signed(delta);
        }
    }

    /// `k · V^(1 - arity)`.
    pub fn volume_scaled_rate(&self, volume: &T) -> T {
        match self.arity {
            0 => self.rate.clone() * volume.clone(),
            a => self.rate.clone() / num_traits::pow(volume.clone(), (a - 1) as usize),
        }
    }

    /// Product of the falling factorials `x(Y)(x(Y)-1)…(x(Y)-r(Y)+1)` over
    /// reactants. Zero exactly when the reaction is not applicable.
    pub fn combinations(&self, state: &CountVector) -> T {
        assert_eq!(state.dim(), self.dim(), "state dimension mismatch");
        let mut product = T::one();
        for &(species, stoich) in &self.reactant_terms {
            let count = state[species];
            if count < stoich {
                return T::zero();
            }
            for i in 0..stoich {
                product = product * T::from_count(count - i);
            }
        }
        product
    }

    /// Stochastic mass-action rate `k · V^(1-arity) · Π falling factorials`.
    /// No `1/r!` correction is applied.
    pub fn propensity(&self, state: &CountVector, volume: &T) -> T {
        let combos = self.combinations(state);
        if combos.is_zero() {
            return combos;
        }
        self.volume_scaled_rate(volume) * combos
    }

    /// Re-expresses this reaction over a larger species table. `map[i]` is the
    /// position of local species `i` in the target table of size `dim`.
    pub fn embed(&self, map: &[usize], dim: usize) -> Self {
        assert_eq!(map.len(), self.dim());
        let mut r = CountVector::zeros(dim);
        let mut p = CountVector::zeros(dim);
        for (local, &global) in map.iter().enumerate() {
            r[global] = self.reactants[local];
            p[global] = self.products[local];
        }
        Reaction::new(r, p, self.rate.clone()).expect("embedding preserves reaction validity")
    }
}

impl<T: PartialEq> PartialEq for Reaction<T> {
    fn eq(&self, other: &Self) -> bool {
        self.reactants == other.reactants && self.products == other.products && self.rate == other.rate
    }
}

/// A chemical reaction network `(S, R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Crn<T> {
    species: SpeciesTable,
    reactions: Vec<Reaction<T>>,
}

impl<T: Scalar> Crn<T> {
    /// The trivial network `(∅, ∅)`.
    pub fn empty() -> Self {
        Self {
            species: SpeciesTable::new(),
            reactions: Vec::new(),
        }
    }

    pub fn new(species: SpeciesTable, reactions: Vec<Reaction<T>>) -> Result<Self, CrnError> {
        Self::from_unique_reactions(species, reactions)
    }

    /// Same as [`Crn::new`]; duplicate detection is hashed on stoichiometry so
    /// large networks build in linear time.
    pub fn from_unique_reactions(species: SpeciesTable, reactions: Vec<Reaction<T>>) -> Result<Self, CrnError> {
        let mut seen: HashMap<(&CountVector, &CountVector), Vec<usize>> = HashMap::new();
        for (j, r) in reactions.iter().enumerate() {
            if r.dim() != species.len() {
                return Err(CrnError::DimensionMismatch {
                    expected: species.len(),
                    found: r.dim(),
                });
            }
            let bucket = seen.entry((&r.reactants, &r.products)).or_default();
            if bucket.iter().any(|&i| reactions[i].rate == r.rate) {
                return Err(CrnError::DuplicateReaction(j));
            }
            bucket.push(j);
        }
        Ok(Self { species, reactions })
    }

    /// Adds a reaction, rejecting identical triples.
    pub fn push(&mut self, reaction: Reaction<T>) -> Result<usize, CrnError> {
        if reaction.dim() != self.species.len() {
            return Err(CrnError::DimensionMismatch {
                expected: self.species.len(),
                found: reaction.dim(),
            });
        }
        if self.reactions.contains(&reaction) {
            return Err(CrnError::DuplicateReaction(self.reactions.len()));
        }
        self.reactions.push(reaction);
        Ok(self.reactions.len() - 1)
    }

    pub fn species(&self) -> &SpeciesTable {
        &self.species
    }

    pub fn reactions(&self) -> &[Reaction<T>] {
        &self.reactions
    }

    pub fn reaction(&self, index: usize) -> &Reaction<T> {
        &self.reactions[index]
    }

    pub fn is_empty(&self) -> bool {
        self.species.is_empty() && self.reactions.is_empty()
    }

    pub fn zero_state(&self) -> CountVector {
        CountVector::zeros(self.species.len())
    }

    /// Builds a state from `(species, count)` pairs; unnamed species are zero.
    pub fn state(&self, counts: &[(&str, u64)]) -> Result<CountVector, CrnError> {
        let mut state = self.zero_state();
        for &(name, count) in counts {
            let i = self
                .species
                .index_of(name)
                .ok_or_else(|| CrnError::UnknownSpecies(name.to_owned()))?;
            state[i] = count;
        }
        Ok(state)
    }

    /// Propensity of reaction `index`, rejecting non-finite results.
    pub fn propensity(&self, index: usize, state: &CountVector, volume: &T) -> Result<T, CrnError> {
        let value = self.reactions[index].propensity(state, volume);
        if value.is_finite_value() {
            Ok(value)
        } else {
            Err(CrnError::NumericOverflow { reaction: index })
        }
    }

    pub fn map_rates<U: Scalar>(&self, mut f: impl FnMut(&T) -> U) -> Result<Crn<U>, CrnError> {
        let reactions = self
            .reactions
            .iter()
            .map(|r| Reaction::new(r.reactants.clone(), r.products.clone(), f(&r.rate)))
            .collect::<Result<Vec<_>, _>>()?;
        Crn::new(self.species.clone(), reactions)
    }
}

type Terms = Vec<(usize, u64)>;

/// Convenience constructor registering species in first-appearance order.
///
/// ```
/// use crngame_core::CrnBuilder;
/// let r = CrnBuilder::new()
///     .reaction(&[("X", 2), ("Y", 1)], &[("X", 3)], 1.0)
///     .reaction(&[("X", 1), ("Y", 2)], &[("Y", 3)], 1.0)
///     .build()
///     .unwrap();
/// assert_eq!(r.species().names(), ["X", "Y"]);
/// ```
#[derive(Debug, Clone, Default)]
pub struct CrnBuilder<T> {
    species: SpeciesTable,
    reactions: Vec<(Terms, Terms, T)>,
}

impl<T: Scalar> CrnBuilder<T> {
    pub fn new() -> Self {
        Self {
            species: SpeciesTable::new(),
            reactions: Vec::new(),
        }
    }

    pub fn species(mut self, name: &str) -> Self {
        self.species.insert(name);
        self
    }

    pub fn reaction(mut self, reactants: &[(&str, u64)], products: &[(&str, u64)], rate: T) -> Self {
        let mut side = |terms: &[(&str, u64)]| -> Vec<(usize, u64)> {
            terms.iter().map(|&(n, c)| (self.species.insert(n), c)).collect()
        };
        let r = side(reactants);
        let p = side(products);
        self.reactions.push((r, p, rate));
        self
    }

    pub fn build(self) -> Result<Crn<T>, CrnError> {
        let dim = self.species.len();
        let dense = |terms: &[(usize, u64)]| {
            let mut v = CountVector::zeros(dim);
            for &(i, c) in terms {
                v[i] += c;
            }
            v
        };
        let reactions = self
            .reactions
            .iter()
            .map(|(r, p, k)| Reaction::new(dense(r), dense(p), k.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        Crn::new(self.species, reactions)
    }
}
