use thiserror::Error;

use super::{assemble_str, AsmSourceError};
use crate::cm::{parity_machine, CounterMachine};
use crate::tasks::{Encoding, Task};

#[derive(Debug, Error)]
pub enum MachineError {
    #[error("no stock machine for task `{0}` with {1} encoding")]
    UnknownTask(Task, Encoding),
    #[error("stock machine failed to assemble: {0}")]
    Assembly(#[from] AsmSourceError),
}

/// Assembler source of a stock machine, when it is written in assembler.
pub fn machine_source(task: Task, enc: Encoding) -> Option<&'static str> {
    Some(match (task, enc) {
        (Task::Prime, Encoding::Unary) => include_str!("machines/prime.asm"),
        (Task::Exponential, Encoding::Unary) => include_str!("machines/exponential.asm"),
        (Task::Division, Encoding::Unary) => include_str!("machines/division.asm"),
        (Task::Gcd, Encoding::Unary) => include_str!("machines/gcd.asm"),
        (Task::Multiplication, Encoding::Unary) => include_str!("machines/multiplication.asm"),
        (Task::EndsInB, Encoding::Binary) => include_str!("machines/ends_in_b.asm"),
        (Task::BinaryEven, Encoding::Binary) => include_str!("machines/binary_even.asm"),
        _ => return None,
    })
}

/// The stock machine deciding `task`. Unary machines take the letter
/// counts; binary ones take one decoded integer per letter.
pub fn stdlib_machine(task: Task, enc: Encoding) -> Result<CounterMachine, MachineError> {
    if (task, enc) == (Task::Parity, Encoding::Unary) {
        return Ok(parity_machine());
    }
    let src = machine_source(task, enc).ok_or(MachineError::UnknownTask(task, enc))?;
    Ok(assemble_str(src)?)
}
