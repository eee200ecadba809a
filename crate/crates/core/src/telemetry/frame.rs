//! Meter frame codec.
//!
//! ```text
//! 0xA5 | node_id | function | addr_hi addr_lo | count_or_len | payload... | crc_lo crc_hi
//! ```
//!
//! For `read_regs` the count byte is the number of 16-bit registers and the
//! payload is empty. For `reply` and `error` it is the payload length in
//! bytes. The CRC covers every preceding byte, start byte included.

use thiserror::Error;

use super::crc::crc16;

pub const START_BYTE: u8 = 0xA5;
pub const MIN_NODE_ID: u8 = 1;
pub const MAX_NODE_ID: u8 = 247;
/// Largest register count a single read may ask for.
pub const MAX_READ_COUNT: u8 = 125;
const HEADER_LEN: usize = 6;
const CRC_LEN: usize = 2;

/// Exception codes carried in an `error` frame.
pub const EXC_ILLEGAL_FUNCTION: u8 = 0x01;
pub const EXC_ILLEGAL_ADDRESS: u8 = 0x02;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("framing: {0}")]
    Framing(String),
    #[error("checksum mismatch: frame carries {received:#06x}, computed {computed:#06x}")]
    Checksum { received: u16, computed: u16 },
    #[error("field out of range: {0}")]
    FieldRange(String),
}

impl FrameError {
    pub fn name(&self) -> &'static str {
        match self {
            FrameError::Framing(_) => "FramingError",
            FrameError::Checksum { .. } => "ChecksumError",
            FrameError::FieldRange(_) => "FieldRange",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Function {
    ReadRegs = 0x03,
    Reply = 0x83,
    Error = 0xEE,
}

impl Function {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0x03 => Some(Function::ReadRegs),
            0x83 => Some(Function::Reply),
            0xEE => Some(Function::Error),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MeterFrame {
    pub node_id: u8,
    pub function: Function,
    pub register_addr: u16,
    pub count_or_len: u8,
    pub payload: Vec<u8>,
}

impl MeterFrame {
    pub fn read(node_id: u8, register_addr: u16, count: u8) -> Self {
        Self { node_id, function: Function::ReadRegs, register_addr, count_or_len: count, payload: Vec::new() }
    }

    /// Panics if `payload` is longer than 255 bytes.
    pub fn reply(node_id: u8, register_addr: u16, payload: Vec<u8>) -> Self {
        let len = u8::try_from(payload.len()).expect("reply payload fits in one frame");
        Self { node_id, function: Function::Reply, register_addr, count_or_len: len, payload }
    }

    pub fn error(node_id: u8, register_addr: u16, code: u8) -> Self {
        Self { node_id, function: Function::Error, register_addr, count_or_len: 1, payload: vec![code] }
    }

    fn check(&self) -> Result<(), FrameError> {
        if !(MIN_NODE_ID..=MAX_NODE_ID).contains(&self.node_id) {
            return Err(FrameError::FieldRange(format!(
                "node_id {} outside {MIN_NODE_ID}..={MAX_NODE_ID}",
                self.node_id
            )));
        }
        match self.function {
            Function::ReadRegs => {
                if self.count_or_len == 0 || self.count_or_len > MAX_READ_COUNT {
                    return Err(FrameError::FieldRange(format!(
                        "register count {} outside 1..={MAX_READ_COUNT}",
                        self.count_or_len
                    )));
                }
                if !self.payload.is_empty() {
                    return Err(FrameError::FieldRange("read request carries a payload".into()));
                }
            }
            Function::Reply | Function::Error => {
                if self.payload.len() != usize::from(self.count_or_len) {
                    return Err(FrameError::FieldRange(format!(
                        "payload length {} does not match length byte {}",
                        self.payload.len(),
                        self.count_or_len
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn encode_frame(frame: &MeterFrame) -> Result<Vec<u8>, FrameError> {
    frame.check()?;
    let mut out = Vec::with_capacity(HEADER_LEN + frame.payload.len() + CRC_LEN);
    out.push(START_BYTE);
    out.push(frame.node_id);
    out.push(frame.function.code());
    out.extend_from_slice(&frame.register_addr.to_be_bytes());
    out.push(frame.count_or_len);
    out.extend_from_slice(&frame.payload);
    let crc = crc16(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn decode_frame(bytes: &[u8]) -> Result<MeterFrame, FrameError> {
    let Some(&start) = bytes.first() else {
        return Err(FrameError::Framing("empty input".into()));
    };
    if start != START_BYTE {
        return Err(FrameError::Framing(format!("bad start byte {start:#04x}")));
    }
    if bytes.len() < HEADER_LEN + CRC_LEN {
        return Err(FrameError::Framing(format!("truncated frame of {} bytes", bytes.len())));
    }
    let function = Function::from_code(bytes[2])
        .ok_or_else(|| FrameError::Framing(format!("unknown function code {:#04x}", bytes[2])))?;
    let count_or_len = bytes[5];
    let payload_len = match function {
        Function::ReadRegs => 0,
        Function::Reply | Function::Error => usize::from(count_or_len),
    };
    let expected = HEADER_LEN + payload_len + CRC_LEN;
    if bytes.len() != expected {
        return Err(FrameError::Framing(format!("frame is {} bytes, header implies {expected}", bytes.len())));
    }
    let body = &bytes[..expected - CRC_LEN];
    let received = u16::from_le_bytes([bytes[expected - 2], bytes[expected - 1]]);
    let computed = crc16(body);
    if received != computed {
        return Err(FrameError::Checksum { received, computed });
    }
    let frame = MeterFrame {
        node_id: bytes[1],
        function,
        register_addr: u16::from_be_bytes([bytes[3], bytes[4]]),
        count_or_len,
        payload: bytes[HEADER_LEN..HEADER_LEN + payload_len].to_vec(),
    };
    frame.check()?;
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn read_request_layout() {
        let bytes = encode_frame(&MeterFrame::read(1, 0x0000, 2)).unwrap();
        assert_eq!(bytes, [0xA5, 0x01, 0x03, 0x00, 0x00, 0x02, 0xA4, 0xAB]);
        let bytes = encode_frame(&MeterFrame::read(1, 0x0000, 10)).unwrap();
        assert_eq!(bytes, [0xA5, 0x01, 0x03, 0x00, 0x00, 0x0A, 0xA5, 0x6D]);
    }

    #[test]
    fn node_zero_rejected() {
        assert_eq!(encode_frame(&MeterFrame::read(0, 0, 2)).unwrap_err().name(), "FieldRange");
        assert_eq!(encode_frame(&MeterFrame::read(248, 0, 2)).unwrap_err().name(), "FieldRange");
    }

    #[test]
    fn roundtrip_and_corruption() {
        let f = MeterFrame::reply(17, 0x0004, vec![0, 9, 0x75, 0xA0]);
        let mut bytes = encode_frame(&f).unwrap();
        assert_eq!(decode_frame(&bytes).unwrap(), f);
        *bytes.last_mut().unwrap() ^= 0xFF;
        assert_eq!(decode_frame(&bytes).unwrap_err().name(), "ChecksumError");
        assert_eq!(decode_frame(&[]).unwrap_err().name(), "FramingError");
        assert_eq!(decode_frame(&bytes[..5]).unwrap_err().name(), "FramingError");
    }

    #[test]
    fn error_frame_roundtrip() {
        let f = MeterFrame::error(3, 0x00FF, EXC_ILLEGAL_ADDRESS);
        assert_eq!(decode_frame(&encode_frame(&f).unwrap()).unwrap(), f);
    }
}
