//! The `E(n,m)+D(p,q)` architecture genotype.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SLOTS: usize = 4;

/// Layer family occupying one encoder or decoder slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Static,
    Parf,
    Hybrid,
}

impl LayerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Static => "static",
            LayerKind::Parf => "parf",
            LayerKind::Hybrid => "hybrid",
        }
    }
}

/// Counts of Conv-PARF and hybrid layers in the 4-slot encoder and decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct VariantSpec {
    pub encoder_parf: usize,
    pub encoder_hybrid: usize,
    pub decoder_parf: usize,
    pub decoder_hybrid: usize,
}

/// The nine variants compared in the ablation, in table order.
pub const TABLE_VARIANTS: [&str; 9] = [
    "E(4,0)+D(4,0)",
    "E(3,1)+D(3,1)",
    "E(2,2)+D(2,2)",
    "E(1,3)+D(1,3)",
    "E(0,4)+D(0,4)",
    "E(1,3)+D(0,3)",
    "E(3,1)+D(0,1)",
    "E(2,2)+D(0,0)",
    "E(2,2)+D(0,2)",
];

impl Default for VariantSpec {
    fn default() -> Self {
        Self::new(2, 2, 0, 2).expect("default variant is valid")
    }
}

impl VariantSpec {
    pub fn new(encoder_parf: usize, encoder_hybrid: usize, decoder_parf: usize, decoder_hybrid: usize) -> Result<Self> {
        if encoder_parf + encoder_hybrid > SLOTS {
            return Err(Error::validation(format!(
                "encoder has {SLOTS} slots but E({encoder_parf},{encoder_hybrid}) needs {}",
                encoder_parf + encoder_hybrid
            )));
        }
        if decoder_parf + decoder_hybrid > SLOTS {
            return Err(Error::validation(format!(
                "decoder has {SLOTS} slots but D({decoder_parf},{decoder_hybrid}) needs {}",
                decoder_parf + decoder_hybrid
            )));
        }
        Ok(Self {
            encoder_parf,
            encoder_hybrid,
            decoder_parf,
            decoder_hybrid,
        })
    }

    pub fn as_tuple(&self) -> (usize, usize, usize, usize) {
        (self.encoder_parf, self.encoder_hybrid, self.decoder_parf, self.decoder_hybrid)
    }

    /// Encoder slots from the stem downwards: Conv-PARF, static filler, hybrid.
    pub fn encoder_slots(&self) -> [LayerKind; SLOTS] {
        let mut slots = [LayerKind::Static; SLOTS];
        for (i, slot) in slots.iter_mut().enumerate() {
            if i < self.encoder_parf {
                *slot = LayerKind::Parf;
            } else if i >= SLOTS - self.encoder_hybrid {
                *slot = LayerKind::Hybrid;
            }
        }
        slots
    }

    /// Decoder slots from the bottleneck upwards: hybrid, Conv-PARF, static filler.
    pub fn decoder_slots(&self) -> [LayerKind; SLOTS] {
        let mut slots = [LayerKind::Static; SLOTS];
        for (i, slot) in slots.iter_mut().enumerate() {
            if i < self.decoder_hybrid {
                *slot = LayerKind::Hybrid;
            } else if i < self.decoder_hybrid + self.decoder_parf {
                *slot = LayerKind::Parf;
            }
        }
        slots
    }
}

impl fmt::Display for VariantSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "E({},{})+D({},{})",
            self.encoder_parf, self.encoder_hybrid, self.decoder_parf, self.decoder_hybrid
        )
    }
}

/// Parses `E(n,m)+D(p,q)` with single-digit counts.
pub fn parse_variant(text: &str) -> Result<VariantSpec> {
    const TEMPLATE: &[u8] = b"E(#,#)+D(#,#)";
    let bytes = text.as_bytes();
    let mut digits = [0usize; 4];
    let mut d = 0;
    for (pos, &want) in TEMPLATE.iter().enumerate() {
        let Some(&got) = bytes.get(pos) else {
            return Err(Error::Parse {
                position: pos,
                message: format!("unexpected end of input, expected `{}`", describe(want)),
            });
        };
        if want == b'#' {
            if !got.is_ascii_digit() {
                return Err(Error::Parse {
                    position: pos,
                    message: format!("expected a digit, found `{}`", got as char),
                });
            }
            digits[d] = usize::from(got - b'0');
            d += 1;
        } else if got != want {
            return Err(Error::Parse {
                position: pos,
                message: format!("expected `{}`, found `{}`", want as char, got as char),
            });
        }
    }
    if bytes.len() > TEMPLATE.len() {
        return Err(Error::Parse {
            position: TEMPLATE.len(),
            message: "trailing characters after variant".into(),
        });
    }
    VariantSpec::new(digits[0], digits[1], digits[2], digits[3])
}

fn describe(b: u8) -> String {
    if b == b'#' {
        "digit".into()
    } else {
        (b as char).to_string()
    }
}

impl FromStr for VariantSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_variant(s)
    }
}

impl TryFrom<String> for VariantSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        parse_variant(&s)
    }
}

impl From<VariantSpec> for String {
    fn from(v: VariantSpec) -> String {
        v.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_default_variant() {
        assert_eq!(parse_variant("E(2,2)+D(0,2)").unwrap().as_tuple(), (2, 2, 0, 2));
        assert_eq!(parse_variant("E(4,0)+D(4,0)").unwrap().as_tuple(), (4, 0, 4, 0));
    }

    #[test]
    fn over_full_encoder_fails_validation() {
        assert!(matches!(parse_variant("E(3,2)+D(0,0)"), Err(Error::Validation(_))));
        assert!(matches!(parse_variant("E(0,0)+D(4,1)"), Err(Error::Validation(_))));
    }

    #[test]
    fn malformed_strings_report_position() {
        match parse_variant("E(2;2)+D(0,2)") {
            Err(Error::Parse { position, .. }) => assert_eq!(position, 3),
            other => panic!("{other:?}"),
        }
        match parse_variant("E(2,2)+D(0,") {
            Err(Error::Parse { position, .. }) => assert_eq!(position, 11),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_variant("E(2,2)+D(0,2) "), Err(Error::Parse { position: 13, .. })));
        assert!(matches!(parse_variant("E(12,2)+D(0,2)"), Err(Error::Parse { position: 3, .. })));
    }

    #[test]
    fn slot_layouts() {
        use LayerKind::*;
        let v = VariantSpec::default();
        assert_eq!(v.encoder_slots(), [Parf, Parf, Hybrid, Hybrid]);
        assert_eq!(v.decoder_slots(), [Hybrid, Hybrid, Static, Static]);
        let v = parse_variant("E(1,1)+D(1,2)").unwrap();
        assert_eq!(v.encoder_slots(), [Parf, Static, Static, Hybrid]);
        assert_eq!(v.decoder_slots(), [Hybrid, Hybrid, Parf, Static]);
    }

    #[test]
    fn table_variants_round_trip_display() {
        for s in TABLE_VARIANTS {
            assert_eq!(parse_variant(s).unwrap().to_string(), s);
        }
    }
}
