use std::fmt;

use sha2::{Digest, Sha256};

/// First 64 bits of SHA-256 over a domain tag followed by `parts`.
///
/// Each part is length-prefixed so that different splits of the same bytes
/// never collide.
pub(crate) fn content_hash<'a>(domain: &str, parts: impl IntoIterator<Item = &'a [u8]>) -> u64 {
    let mut h = Sha256::new();
    h.update(domain.as_bytes());
    for part in parts {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part);
    }
    let digest = h.finalize();
    let mut first = [0u8; 8];
    first.copy_from_slice(&digest[..8]);
    u64::from_be_bytes(first)
}

macro_rules! hex_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub u64);

        impl $name {
            /// Parses the 16-digit lowercase hex form used in every export.
            pub fn from_hex(s: &str) -> Option<Self> {
                if s.len() != 16 {
                    return None;
                }
                u64::from_str_radix(s, 16).ok().map($name)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{:016x}", self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({:016x})", stringify!($name), self.0)
            }
        }
    };
}

hex_id!(
    /// Content hash of a pattern's bytes. Two units that discover the same
    /// bytes independently agree on the id without coordination.
    PatternId
);
hex_id!(
    /// Content hash of a template shape (positions with sorted slot members).
    NodeId
);

impl PatternId {
    pub fn of(bytes: &[u8]) -> Self {
        PatternId(content_hash("pattern", [bytes]))
    }
}
