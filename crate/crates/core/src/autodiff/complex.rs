use super::{Tape, Var};
use crate::error::Result;

/// Complex array held as a real/imaginary pair of equally shaped tensors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Complex {
    pub re: Var,
    pub im: Var,
}

impl Complex {
    pub fn new(re: Var, im: Var) -> Self {
        Complex { re, im }
    }

    /// `(a + bi)(c + di) = (ac − bd) + (ad + bc)i`, broadcasting like [`Tape::mul`].
    pub fn mul(self, tape: &mut Tape, other: Complex) -> Result<Complex> {
        let ac = tape.mul(self.re, other.re)?;
        let bd = tape.mul(self.im, other.im)?;
        let ad = tape.mul(self.re, other.im)?;
        let bc = tape.mul(self.im, other.re)?;
        Ok(Complex {
            re: tape.sub(ac, bd)?,
            im: tape.add(ad, bc)?,
        })
    }

    pub fn conj(self, tape: &mut Tape) -> Complex {
        Complex {
            re: self.re,
            im: tape.neg(self.im),
        }
    }
}
