//! Classic pcap reader with just enough Ethernet/IPv4/UDP/TCP decoding
//! to pull application payloads out of frames.

use super::Layer;

const LINKTYPE_ETHERNET: u32 = 1;
const ETHERTYPE_IPV4: u16 = 0x0800;
const IPPROTO_TCP: u8 = 6;
const IPPROTO_UDP: u8 = 17;
const MAX_RECORD: usize = 256 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PcapError {
    UnknownMagic([u8; 4]),
    ShortHeader,
    TruncatedRecord { frame: usize },
    UnsupportedLinkType(u32),
    Malformed { frame: usize, what: &'static str },
}

impl std::fmt::Display for PcapError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PcapError::UnknownMagic(m) => write!(f, "unknown pcap magic {}", hex::encode(m)),
            PcapError::ShortHeader => write!(f, "file shorter than the pcap global header"),
            PcapError::TruncatedRecord { frame } => write!(f, "frame {frame}: truncated packet record"),
            PcapError::UnsupportedLinkType(t) => write!(f, "unsupported link type {t} (only Ethernet)"),
            PcapError::Malformed { frame, what } => write!(f, "frame {frame}: {what}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endian {
    Little,
    Big,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub endian: Endian,
    pub nanosecond: bool,
    pub snaplen: u32,
    pub link_type: u32,
}

/// One captured frame; `frame` counts from 1 like capture tools do.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame<'a> {
    pub frame: usize,
    pub data: &'a [u8],
}

fn read_u32(b: &[u8], endian: Endian) -> u32 {
    let a = [b[0], b[1], b[2], b[3]];
    match endian {
        Endian::Little => u32::from_le_bytes(a),
        Endian::Big => u32::from_be_bytes(a),
    }
}

pub fn parse_header(bytes: &[u8]) -> Result<Header, PcapError> {
    if bytes.len() < 24 {
        return Err(PcapError::ShortHeader);
    }
    let magic = [bytes[0], bytes[1], bytes[2], bytes[3]];
    let (endian, nanosecond) = match magic {
        [0xa1, 0xb2, 0xc3, 0xd4] => (Endian::Big, false),
        [0xd4, 0xc3, 0xb2, 0xa1] => (Endian::Little, false),
        [0xa1, 0xb2, 0x3c, 0x4d] => (Endian::Big, true),
        [0x4d, 0x3c, 0xb2, 0xa1] => (Endian::Little, true),
        _ => return Err(PcapError::UnknownMagic(magic)),
    };
    Ok(Header {
        endian,
        nanosecond,
        snaplen: read_u32(&bytes[16..20], endian),
        link_type: read_u32(&bytes[20..24], endian),
    })
}

/// Splits a capture into frames.
pub fn frames(bytes: &[u8]) -> Result<(Header, Vec<Frame<'_>>), PcapError> {
    let header = parse_header(bytes)?;
    let mut out = Vec::new();
    let mut pos = 24;
    let mut frame = 0;
    while pos < bytes.len() {
        frame += 1;
        if bytes.len() - pos < 16 {
            return Err(PcapError::TruncatedRecord { frame });
        }
        let incl = read_u32(&bytes[pos + 8..pos + 12], header.endian) as usize;
        pos += 16;
        if incl > MAX_RECORD || bytes.len() - pos < incl {
            return Err(PcapError::TruncatedRecord { frame });
        }
        out.push(Frame {
            frame,
            data: &bytes[pos..pos + incl],
        });
        pos += incl;
    }
    Ok((header, out))
}

/// Application payload of an Ethernet frame, or `None` when the frame does
/// not match the layer and port filters.
pub fn payload<'a>(f: &Frame<'a>, layer: Layer, port: Option<u16>) -> Result<Option<&'a [u8]>, PcapError> {
    let want = match layer {
        Layer::RawFrame => return Ok(Some(f.data)),
        Layer::UdpPayload => IPPROTO_UDP,
        Layer::TcpPayload => IPPROTO_TCP,
    };
    let malformed = |what| PcapError::Malformed { frame: f.frame, what };
    let d = f.data;
    if d.len() < 14 {
        return Err(malformed("truncated Ethernet header"));
    }
    if u16::from_be_bytes([d[12], d[13]]) != ETHERTYPE_IPV4 {
        return Ok(None);
    }
    let ip = &d[14..];
    if ip.len() < 20 {
        return Err(malformed("truncated IPv4 header"));
    }
    if ip[0] >> 4 != 4 {
        return Err(malformed("IPv4 ethertype with non-IPv4 version"));
    }
    let ihl = usize::from(ip[0] & 0x0f) * 4;
    if ihl < 20 || ip.len() < ihl {
        return Err(malformed("bad IPv4 header length"));
    }
    if ip[9] != want {
        return Ok(None);
    }
    let frag = u16::from_be_bytes([ip[6], ip[7]]);
    if frag & 0x3fff != 0 {
        // fragments are not reassembled
        return Ok(None);
    }
    let total = usize::from(u16::from_be_bytes([ip[2], ip[3]]));
    let end = total.clamp(ihl, ip.len());
    let l4 = &ip[ihl..end];
    let (sport, dport, body) = if want == IPPROTO_UDP {
        if l4.len() < 8 {
            return Err(malformed("truncated UDP header"));
        }
        let ulen = usize::from(u16::from_be_bytes([l4[4], l4[5]])).clamp(8, l4.len());
        (u16::from_be_bytes([l4[0], l4[1]]), u16::from_be_bytes([l4[2], l4[3]]), &l4[8..ulen])
    } else {
        if l4.len() < 20 {
            return Err(malformed("truncated TCP header"));
        }
        let off = usize::from(l4[12] >> 4) * 4;
        if off < 20 || off > l4.len() {
            return Err(malformed("bad TCP data offset"));
        }
        (u16::from_be_bytes([l4[0], l4[1]]), u16::from_be_bytes([l4[2], l4[3]]), &l4[off..])
    };
    if let Some(p) = port {
        if sport != p && dport != p {
            return Ok(None);
        }
    }
    Ok(Some(body))
}

/// Frame number and payload of every matching, non-empty payload.
pub fn extract(bytes: &[u8], layer: Layer, port: Option<u16>) -> Result<Vec<(usize, Vec<u8>)>, PcapError> {
    let (header, frames) = frames(bytes)?;
    if layer != Layer::RawFrame && header.link_type != LINKTYPE_ETHERNET {
        return Err(PcapError::UnsupportedLinkType(header.link_type));
    }
    let mut out = Vec::new();
    for f in &frames {
        if let Some(p) = payload(f, layer, port)? {
            if !p.is_empty() {
                out.push((f.frame, p.to_vec()));
            }
        }
    }
    Ok(out)
}

/// Test and fixture helper: writes a little- or big-endian classic pcap
/// of Ethernet frames.
pub fn write_pcap(frames: &[Vec<u8>], endian: Endian) -> Vec<u8> {
    let w32 = |v: u32| match endian {
        Endian::Little => v.to_le_bytes(),
        Endian::Big => v.to_be_bytes(),
    };
    let w16 = |v: u16| match endian {
        Endian::Little => v.to_le_bytes(),
        Endian::Big => v.to_be_bytes(),
    };
    let mut out = Vec::new();
    out.extend_from_slice(&w32(0xa1b2c3d4));
    out.extend_from_slice(&w16(2));
    out.extend_from_slice(&w16(4));
    out.extend_from_slice(&w32(0));
    out.extend_from_slice(&w32(0));
    out.extend_from_slice(&w32(65535));
    out.extend_from_slice(&w32(LINKTYPE_ETHERNET));
    for (i, f) in frames.iter().enumerate() {
        out.extend_from_slice(&w32(1_600_000_000 + i as u32));
        out.extend_from_slice(&w32(0));
        out.extend_from_slice(&w32(f.len() as u32));
        out.extend_from_slice(&w32(f.len() as u32));
        out.extend_from_slice(f);
    }
    out
}

/// Builds an Ethernet/IPv4/UDP frame around `payload`.
pub fn udp_frame(sport: u16, dport: u16, payload: &[u8]) -> Vec<u8> {
    let mut f = vec![0x02, 0, 0, 0, 0, 1, 0x02, 0, 0, 0, 0, 2, 0x08, 0x00];
    let total = (20 + 8 + payload.len()) as u16;
    f.extend_from_slice(&[0x45, 0, (total >> 8) as u8, total as u8, 0, 1, 0x40, 0, 64, IPPROTO_UDP, 0, 0]);
    f.extend_from_slice(&[10, 0, 0, 1, 10, 0, 0, 2]);
    let ulen = (8 + payload.len()) as u16;
    f.extend_from_slice(&sport.to_be_bytes());
    f.extend_from_slice(&dport.to_be_bytes());
    f.extend_from_slice(&ulen.to_be_bytes());
    f.extend_from_slice(&[0, 0]);
    f.extend_from_slice(payload);
    f
}

/// Builds an Ethernet/IPv4/TCP frame around `payload`.
pub fn tcp_frame(sport: u16, dport: u16, payload: &[u8]) -> Vec<u8> {
    let mut f = vec![0x02, 0, 0, 0, 0, 1, 0x02, 0, 0, 0, 0, 2, 0x08, 0x00];
    let total = (20 + 20 + payload.len()) as u16;
    f.extend_from_slice(&[0x45, 0, (total >> 8) as u8, total as u8, 0, 1, 0x40, 0, 64, IPPROTO_TCP, 0, 0]);
    f.extend_from_slice(&[10, 0, 0, 1, 10, 0, 0, 2]);
    f.extend_from_slice(&sport.to_be_bytes());
    f.extend_from_slice(&dport.to_be_bytes());
    f.extend_from_slice(&[0, 0, 0, 1, 0, 0, 0, 0, 0x50, 0x18, 0xff, 0xff, 0, 0, 0, 0]);
    f.extend_from_slice(payload);
    f
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arp() -> Vec<u8> {
        let mut f = vec![0xff; 6];
        f.extend_from_slice(&[0x02, 0, 0, 0, 0, 1, 0x08, 0x06]);
        f.extend_from_slice(&[0; 28]);
        f
    }

    #[test]
    fn little_endian_magic() {
        let file = write_pcap(&[udp_frame(1000, 53, b"\x01\x02")], Endian::Little);
        assert_eq!(&file[..4], &[0xd4, 0xc3, 0xb2, 0xa1]);
        let h = parse_header(&file).unwrap();
        assert_eq!(h.endian, Endian::Little);
        assert_eq!(h.link_type, 1);
        assert_eq!(extract(&file, Layer::UdpPayload, None).unwrap(), vec![(1, vec![1, 2])]);
    }

    #[test]
    fn big_endian_and_nanosecond() {
        let mut file = write_pcap(&[udp_frame(1000, 53, b"\x07")], Endian::Big);
        assert_eq!(extract(&file, Layer::UdpPayload, Some(53)).unwrap(), vec![(1, vec![7])]);
        file[2] = 0x3c;
        file[3] = 0x4d;
        assert!(parse_header(&file).unwrap().nanosecond);
        assert_eq!(extract(&file, Layer::UdpPayload, Some(54)).unwrap(), vec![]);
    }

    #[test]
    fn arp_only_yields_nothing() {
        let file = write_pcap(&[arp()], Endian::Little);
        assert!(extract(&file, Layer::UdpPayload, None).unwrap().is_empty());
    }

    #[test]
    fn tcp_and_layer_filtering() {
        let file = write_pcap(&[udp_frame(1, 2, b"u"), tcp_frame(3, 4, b"tcp")], Endian::Little);
        assert_eq!(extract(&file, Layer::TcpPayload, None).unwrap(), vec![(2, b"tcp".to_vec())]);
        assert_eq!(extract(&file, Layer::UdpPayload, None).unwrap(), vec![(1, b"u".to_vec())]);
        assert_eq!(extract(&file, Layer::RawFrame, None).unwrap().len(), 2);
    }

    #[test]
    fn errors_name_the_problem() {
        assert!(matches!(parse_header(&[0u8; 24]), Err(PcapError::UnknownMagic(_))));
        let mut file = write_pcap(&[udp_frame(1, 2, b"abc")], Endian::Little);
        file.truncate(file.len() - 1);
        assert_eq!(extract(&file, Layer::UdpPayload, None), Err(PcapError::TruncatedRecord { frame: 1 }));
        let mut file = write_pcap(&[udp_frame(1, 2, b"abc")], Endian::Little);
        file[20] = 113;
        assert_eq!(extract(&file, Layer::UdpPayload, None), Err(PcapError::UnsupportedLinkType(113)));
    }
}
