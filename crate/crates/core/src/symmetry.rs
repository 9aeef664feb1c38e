//! Scalarset symmetry: permutations of ids and canonical representatives.

use crate::ground::GroundModel;
use crate::state::State;
use crate::types::Ty;

/// Largest scalarset for which brute-force canonicalization is allowed.
pub const MAX_SYM_SIZE: u32 = 5;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SymmetryError {
    #[error(
        "symmetry reduction is disabled for scalarset `{0}` of size {1} (limit {MAX_SYM_SIZE})"
    )]
    TooLarge(String, u32),
}

/// One permutation of every scalarset, compiled to slot moves.
#[derive(Clone, Debug)]
pub struct SlotPerm {
    /// `dst[k]` is where slot k's value goes.
    dst: Vec<u32>,
    /// Value renaming per slot (identity when `None`).
    map: Vec<Option<Vec<u8>>>,
    /// Per scalarset, the id permutation (index id-1 gives the new id).
    pub ids: Vec<(String, Vec<u32>)>,
}

impl SlotPerm {
    pub fn apply(&self, s: &State) -> State {
        let mut out = vec![0u8; s.len()];
        for (k, &v) in s.0.iter().enumerate() {
            let v = match &self.map[k] {
                Some(m) => m[v as usize],
                None => v,
            };
            out[self.dst[k] as usize] = v;
        }
        State(out)
    }

    /// Image of an id of the named scalarset.
    pub fn map_id(&self, scalar: &str, id: u32) -> u32 {
        self.ids
            .iter()
            .find(|(n, _)| n == scalar)
            .map(|(_, p)| p[id as usize - 1])
            .unwrap_or(id)
    }
}

fn permutations(n: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur: Vec<u32> = (1..=n).collect();
    fn rec(k: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if k == cur.len() {
            out.push(cur.clone());
            return;
        }
        for j in k..cur.len() {
            cur.swap(k, j);
            rec(k + 1, cur, out);
            cur.swap(k, j);
        }
    }
    rec(0, &mut cur, &mut out);
    out.sort();
    out
}

/// The symmetry group of a ground model.
#[derive(Clone, Debug)]
pub struct Symmetry {
    pub perms: Vec<SlotPerm>,
}

impl Symmetry {
    /// Every scalarset is permuted over its concrete ids. On abstract
    /// models `o` and null stay fixed.
    pub fn new(model: &GroundModel) -> Result<Symmetry, SymmetryError> {
        let scalars: Vec<(String, u32)> = model
            .env
            .types
            .values()
            .filter_map(|t| match t {
                Ty::Scalar { name, size, .. } => Some((name.clone(), *size)),
                _ => None,
            })
            .map(|(n, s)| {
                if s > MAX_SYM_SIZE {
                    Err(SymmetryError::TooLarge(n, s))
                } else {
                    Ok((n, s))
                }
            })
            .collect::<Result<_, _>>()?;
        let mut combos: Vec<Vec<(String, Vec<u32>)>> = vec![Vec::new()];
        for (name, size) in &scalars {
            let mut next = Vec::new();
            for c in &combos {
                for p in permutations(*size) {
                    let mut c = c.clone();
                    c.push((name.clone(), p));
                    next.push(c);
                }
            }
            combos = next;
        }
        let perms = combos
            .into_iter()
            .map(|ids| {
                let find = |n: &str| ids.iter().find(|(s, _)| s == n).map(|(_, p)| p);
                let mut dst = Vec::with_capacity(model.slots.len());
                let mut map = Vec::with_capacity(model.slots.len());
                for (k, slot) in model.slots.iter().enumerate() {
                    let mut target = k as i64;
                    for ((ty, id), stride) in slot.indices.iter().zip(&slot.strides) {
                        if let Some(p) = find(ty) {
                            target += (p[*id as usize - 1] as i64 - *id as i64) * *stride as i64;
                        }
                    }
                    dst.push(target as u32);
                    map.push(match &slot.ty {
                        Ty::Scalar { name, size, .. } => find(name).map(|p| {
                            let mut m: Vec<u8> = (0..=(*size as u8 + 2)).collect();
                            for id in 1..=*size {
                                m[id as usize] = p[id as usize - 1] as u8;
                            }
                            m
                        }),
                        _ => None,
                    });
                }
                SlotPerm { dst, map, ids }
            })
            .collect();
        Ok(Symmetry { perms })
    }

    /// Lexicographically least image of `s` in slot order.
    pub fn canonicalize(&self, s: &State) -> State {
        let mut best = s.clone();
        for p in &self.perms {
            let img = p.apply(s);
            if img < best {
                best = img;
            }
        }
        best
    }
}

/// Canonicalizes a single state; errors when symmetry is unavailable.
pub fn canonicalize(model: &GroundModel, s: &State) -> Result<State, SymmetryError> {
    Ok(Symmetry::new(model)?.canonicalize(s))
}
