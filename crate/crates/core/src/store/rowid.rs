use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::types::Value;

/// Stable identifier of a logical row.
///
/// The printable prefix names the producer: `t<table>` for base-table rows
/// (payload is a per-table counter) or `<kind><node>` for rows produced by a
/// plan operator (payload is a 128-bit digest of the row's provenance).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowId {
    kind: u8,
    node: u64,
    payload: u128,
}

impl RowId {
    pub const TABLE: u8 = b't';
    pub const JOIN: u8 = b'j';
    pub const GROUP: u8 = b'g';
    pub const UNION: u8 = b'u';
    pub const VALUES: u8 = b'v';

    pub fn table(table_id: u64, counter: u64) -> Self {
        RowId { kind: Self::TABLE, node: table_id, payload: counter as u128 }
    }

    pub fn from_parts(kind: u8, node: u64, payload: u128) -> Self {
        RowId { kind, node, payload }
    }

    pub fn kind(&self) -> char {
        self.kind as char
    }

    pub fn node(&self) -> u64 {
        self.node
    }

    pub fn payload(&self) -> u128 {
        self.payload
    }

    /// Digest-based id for an operator output.
    pub fn digest(kind: u8, node: u64, provenance: &[u8]) -> Self {
        let mut h = Sha256::new();
        h.update([kind]);
        h.update(node.to_le_bytes());
        h.update(provenance);
        let out = h.finalize();
        let mut bytes = [0u8; 16];
        bytes.copy_from_slice(&out[..16]);
        RowId { kind, node, payload: u128::from_be_bytes(bytes) }
    }

    /// Id of a join output row; `None` marks the NULL-padded side.
    pub fn join(node: u64, left: Option<RowId>, right: Option<RowId>) -> Self {
        let mut buf = Vec::with_capacity(2 * 26);
        for side in [left, right] {
            match side {
                Some(id) => {
                    buf.push(1);
                    id.encode_into(&mut buf);
                }
                None => buf.push(0),
            }
        }
        RowId::digest(Self::JOIN, node, &buf)
    }

    /// Id of an aggregate group, a pure function of the group key.
    pub fn group(node: u64, key: &[Value]) -> Self {
        let mut buf = Vec::new();
        for v in key {
            v.encode_into(&mut buf);
        }
        RowId::digest(Self::GROUP, node, &buf)
    }

    /// Id of a UNION ALL output row that came from `branch`.
    pub fn union(node: u64, branch: usize, input: RowId) -> Self {
        let mut buf = Vec::with_capacity(34);
        buf.extend_from_slice(&(branch as u64).to_le_bytes());
        input.encode_into(&mut buf);
        RowId::digest(Self::UNION, node, &buf)
    }

    pub fn values_row(node: u64, index: usize) -> Self {
        RowId::digest(Self::VALUES, node, &(index as u64).to_le_bytes())
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(self.kind);
        out.extend_from_slice(&self.node.to_le_bytes());
        out.extend_from_slice(&self.payload.to_le_bytes());
    }

    /// Printable prefix, e.g. `t3` or `j5`.
    pub fn prefix(&self) -> String {
        format!("{}{}", self.kind as char, self.node)
    }
}

impl fmt::Display for RowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.kind == Self::TABLE {
            write!(f, "t{}:{}", self.node, self.payload)
        } else {
            write!(f, "{}{}:{:032x}", self.kind as char, self.node, self.payload)
        }
    }
}

impl fmt::Debug for RowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("malformed row id '{0}'")]
pub struct RowIdParseError(pub String);

impl FromStr for RowId {
    type Err = RowIdParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || RowIdParseError(s.to_string());
        let (head, tail) = s.split_once(':').ok_or_else(err)?;
        let mut chars = head.chars();
        let kind = chars.next().filter(|c| c.is_ascii_lowercase()).ok_or_else(err)? as u8;
        let node: u64 = chars.as_str().parse().map_err(|_| err())?;
        let payload = if kind == Self::TABLE {
            tail.parse::<u128>().map_err(|_| err())?
        } else {
            u128::from_str_radix(tail, 16).map_err(|_| err())?
        };
        Ok(RowId { kind, node, payload })
    }
}

impl Serialize for RowId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RowId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
