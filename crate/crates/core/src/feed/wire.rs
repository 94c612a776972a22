use super::{parse_tick_line, MarketTick};
use crate::error::{Error, Result};

/// Bytes of little-endian sequence number in front of the CSV payload.
pub const SEQ_PREFIX_LEN: usize = 4;

pub fn encode_datagram(tick: &MarketTick) -> Vec<u8> {
    let line = tick.to_line();
    let mut buf = Vec::with_capacity(SEQ_PREFIX_LEN + line.len());
    buf.extend_from_slice(&tick.seq.to_le_bytes());
    buf.extend_from_slice(line.as_bytes());
    buf
}

/// Decodes one datagram on its own; no state is shared between datagrams.
pub fn decode_datagram(buf: &[u8]) -> Result<MarketTick> {
    if buf.len() <= SEQ_PREFIX_LEN {
        return Err(Error::parse(0, format!("datagram of {} bytes has no payload", buf.len())));
    }
    let (head, payload) = buf.split_at(SEQ_PREFIX_LEN);
    let seq = u32::from_le_bytes(head.try_into().expect("prefix length"));
    let text = std::str::from_utf8(payload).map_err(|_| Error::parse(0, "datagram payload is not UTF-8"))?;
    let mut tick = parse_tick_line(text, 0)?;
    tick.seq = seq;
    Ok(tick)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let tick = MarketTick::new(70_000, 123_456_789, "FB", 26.91).unwrap();
        let bytes = encode_datagram(&tick);
        assert_eq!(&bytes[..4], &70_000u32.to_le_bytes());
        assert_eq!(&bytes[4..], b"123456789,FB,26.91");
        assert_eq!(decode_datagram(&bytes).unwrap(), tick);
    }

    #[test]
    fn rejects_damage() {
        assert!(decode_datagram(&[1, 0, 0]).is_err());
        assert!(decode_datagram(&[1, 0, 0, 0]).is_err());
        assert!(decode_datagram(b"\x01\x00\x00\x00123,FB,2x.5").is_err());
        assert!(decode_datagram(b"\x01\x00\x00\x00123,FB,\xff").is_err());
        assert!(decode_datagram(b"\x01\x00\x00\x00123,FB,0").is_err());
    }
}
