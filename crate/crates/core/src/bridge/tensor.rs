use crate::wire::frame::{ByteReader, PutLe};

use super::BridgeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum DType {
    F32 = 1,
    F64 = 2,
    U8 = 3,
    I32 = 4,
}

impl DType {
    pub fn width(self) -> usize {
        match self {
            DType::F32 | DType::I32 => 4,
            DType::F64 => 8,
            DType::U8 => 1,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(DType::F32),
            2 => Some(DType::F64),
            3 => Some(DType::U8),
            4 => Some(DType::I32),
            _ => None,
        }
    }
}

/// Named dense array, row-major little-endian.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tensor {
    pub name: String,
    pub dtype: DType,
    pub dims: Vec<u32>,
    pub data: Vec<u8>,
}

fn shape_error(name: &str, reason: impl Into<String>) -> BridgeError {
    BridgeError::Tensor { name: name.to_string(), reason: reason.into() }
}

macro_rules! typed {
    ($from:ident, $to:ident, $ty:ty, $dt:expr) => {
        pub fn $from(name: &str, dims: &[u32], values: &[$ty]) -> Result<Self, BridgeError> {
            let data = values.iter().flat_map(|v| v.to_le_bytes()).collect();
            Self::new(name, $dt, dims.to_vec(), data)
        }

        pub fn $to(&self) -> Result<Vec<$ty>, BridgeError> {
            if self.dtype != $dt {
                return Err(shape_error(&self.name, format!("expected {:?}, got {:?}", $dt, self.dtype)));
            }
            Ok(self
                .data
                .chunks_exact(std::mem::size_of::<$ty>())
                .map(|c| <$ty>::from_le_bytes(c.try_into().expect("chunk width")))
                .collect())
        }
    };
}

impl Tensor {
    pub fn new(name: &str, dtype: DType, dims: Vec<u32>, data: Vec<u8>) -> Result<Self, BridgeError> {
        let t = Self { name: name.to_string(), dtype, dims, data };
        t.validate()?;
        Ok(t)
    }

    pub fn element_count(&self) -> usize {
        self.dims.iter().map(|d| *d as usize).product()
    }

    fn validate(&self) -> Result<(), BridgeError> {
        if self.name.len() > u16::MAX as usize {
            return Err(shape_error("<long name>", "name too long"));
        }
        if self.dims.len() > u8::MAX as usize {
            return Err(shape_error(&self.name, "too many dimensions"));
        }
        if self.data.len() != self.element_count() * self.dtype.width() {
            return Err(shape_error(
                &self.name,
                format!("{} data bytes for dims {:?} of {:?}", self.data.len(), self.dims, self.dtype),
            ));
        }
        Ok(())
    }

    typed!(from_f32, to_f32, f32, DType::F32);
    typed!(from_f64, to_f64, f64, DType::F64);
    typed!(from_i32, to_i32, i32, DType::I32);

    pub fn from_u8(name: &str, dims: &[u32], values: &[u8]) -> Result<Self, BridgeError> {
        Self::new(name, DType::U8, dims.to_vec(), values.to_vec())
    }

    pub fn to_u8(&self) -> Result<Vec<u8>, BridgeError> {
        if self.dtype != DType::U8 {
            return Err(shape_error(&self.name, format!("expected U8, got {:?}", self.dtype)));
        }
        Ok(self.data.clone())
    }

    pub(crate) fn encode(&self, out: &mut Vec<u8>) -> Result<(), BridgeError> {
        self.validate()?;
        out.put_u16(self.name.len() as u16);
        out.extend_from_slice(self.name.as_bytes());
        out.put_u8(self.dtype as u8);
        out.put_u8(self.dims.len() as u8);
        for d in &self.dims {
            out.put_u32(*d);
        }
        out.extend_from_slice(&self.data);
        Ok(())
    }

    pub(crate) fn decode(r: &mut ByteReader) -> Result<Self, BridgeError> {
        let name_len = r.u16("tensor name_len")? as usize;
        let name = String::from_utf8(r.take(name_len, "tensor name")?.to_vec())
            .map_err(|_| BridgeError::Protocol("tensor name is not UTF-8".into()))?;
        let code = r.u8("tensor dtype")?;
        let dtype = DType::from_code(code).ok_or_else(|| shape_error(&name, format!("unknown dtype {code}")))?;
        let ndim = r.u8("tensor ndim")? as usize;
        let dims = (0..ndim).map(|_| r.u32("tensor dims")).collect::<Result<Vec<_>, _>>()?;
        let count = dims.iter().try_fold(1usize, |acc, d| acc.checked_mul(*d as usize));
        let bytes = count
            .and_then(|c| c.checked_mul(dtype.width()))
            .filter(|b| *b <= r.remaining())
            .ok_or_else(|| shape_error(&name, format!("dims {dims:?} exceed payload")))?;
        let data = r.take(bytes, "tensor data")?.to_vec();
        Ok(Self { name, dtype, dims, data })
    }
}
