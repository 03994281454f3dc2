use ndarray::NdFloat;
use num_traits::FromPrimitive;

/// Floating-point element type of tensors: f32 or f64.
///
/// Everything downstream (ops, layers, models, losses) is generic over this,
/// so the same code path can train in f32 and be gradient-checked in f64.
pub trait Scalar: NdFloat + FromPrimitive + std::iter::Sum + 'static {
    /// Short dtype tag used by the tensor blob format.
    const DTYPE: &'static str;
    /// Serialized width in bytes.
    const BYTE_WIDTH: usize;

    fn of_f64(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite f64 converts to scalar")
    }

    fn of_usize(v: usize) -> Self {
        <Self as FromPrimitive>::from_usize(v).expect("usize converts to scalar")
    }

    fn to_f64(self) -> f64;

    /// Native little-endian encoding for the blob format.
    fn put_le(self, out: &mut Vec<u8>);
    fn get_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";
    const BYTE_WIDTH: usize = 4;

    fn to_f64(self) -> f64 {
        f64::from(self)
    }

    fn put_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn get_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4-byte f32"))
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";
    const BYTE_WIDTH: usize = 8;

    fn to_f64(self) -> f64 {
        self
    }

    fn put_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn get_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8-byte f64"))
    }
}
