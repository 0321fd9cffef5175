use alloc::string::String;
use core::fmt;

use crate::boxes::Level;

/// Rejected input to a layout, trace or scenario operation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InputError {
    LevelTooLow { level: Level, min: Level },
    AddressTooLong { level: Level, len: usize },
    DigitOutOfRange { level: Level, digit: u32 },
    PrivateSlot { level: Level, slot: u64 },
    NotInTheta { owner: u32, node: u32, level: Level },
    UnknownNode(u32),
    UnknownColumn(u32),
    OutsideLayout,
    Overflow,
    BadField { field: &'static str, detail: String },
    Script { index: usize, detail: String },
}

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputError::LevelTooLow { level, min } => write!(f, "level {level} is below the minimum {min}"),
            InputError::AddressTooLong { level, len } => {
                write!(f, "address of length {len} is too long for level {level}")
            }
            InputError::DigitOutOfRange { level, digit } => {
                write!(f, "digit {digit} is outside the level-{level} alphabet")
            }
            InputError::PrivateSlot { level, slot } => write!(f, "no private slot {slot} at level {level}"),
            InputError::NotInTheta { owner, node, level } => {
                write!(f, "node {owner} has no private slot in column {node} at level {level}")
            }
            InputError::UnknownNode(n) => write!(f, "unknown tree node {n}"),
            InputError::UnknownColumn(n) => write!(f, "unknown column {n}"),
            InputError::OutsideLayout => write!(f, "input lies outside every laid-out interval"),
            InputError::Overflow => write!(f, "arithmetic overflow"),
            InputError::BadField { field, detail } => write!(f, "bad {field}: {detail}"),
            InputError::Script { index, detail } => write!(f, "script event {index}: {detail}"),
        }
    }
}

impl core::error::Error for InputError {}
