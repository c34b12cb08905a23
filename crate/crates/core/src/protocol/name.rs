use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use super::ProtocolError;

/// `/<prefix components>/<ncFlag>/<packetId>/<genIndx>`.
///
/// With `coded` set the packet id is the class index; otherwise it is a
/// plain sequence number.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentName {
    /// Prefix without leading or trailing slash, e.g. `video/demo`.
    pub prefix: Arc<str>,
    pub coded: bool,
    pub packet_id: u32,
    pub generation: u32,
}

impl ContentName {
    pub fn coded(prefix: Arc<str>, class: usize, generation: u32) -> Self {
        Self { prefix, coded: true, packet_id: class as u32, generation }
    }

    /// Class index of a coded name.
    pub fn class(&self) -> Option<usize> {
        self.coded.then_some(self.packet_id as usize)
    }

    /// Parses and checks the class bound for coded names.
    pub fn parse_checked(s: &str, layers: usize) -> Result<Self, ProtocolError> {
        let n: Self = s.parse()?;
        if n.coded && n.packet_id as usize >= layers {
            return Err(ProtocolError::MalformedName(format!("class {} out of range in `{s}`", n.packet_id)));
        }
        Ok(n)
    }
}

impl fmt::Display for ContentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.prefix.is_empty() {
            write!(f, "/{}", self.prefix)?;
        }
        write!(f, "/{}/{}/{}", u8::from(self.coded), self.packet_id, self.generation)
    }
}

impl FromStr for ContentName {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |why: &str| ProtocolError::MalformedName(format!("{why} in `{s}`"));
        let body = s.strip_prefix('/').ok_or_else(|| bad("missing leading slash"))?;
        let parts: Vec<&str> = body.split('/').collect();
        if parts.len() < 3 || parts.iter().any(|p| p.is_empty()) {
            return Err(bad("expected at least three non-empty segments"));
        }
        let n = parts.len();
        let coded = match parts[n - 3] {
            "0" => false,
            "1" => true,
            _ => return Err(bad("ncFlag must be 0 or 1")),
        };
        let num = |p: &str| p.parse::<u32>().map_err(|_| bad("non-decimal segment"));
        Ok(Self {
            prefix: parts[..n - 3].join("/").into(),
            coded,
            packet_id: num(parts[n - 2])?,
            generation: num(parts[n - 1])?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let n = ContentName::coded("video/demo".into(), 2, 17);
        assert_eq!(n.to_string(), "/video/demo/1/2/17");
        assert_eq!(n.to_string().parse::<ContentName>().unwrap(), n);
        let bare: ContentName = "/0/5/3".parse().unwrap();
        assert_eq!(&*bare.prefix, "");
        assert!(!bare.coded);
        assert_eq!(bare.to_string(), "/0/5/3");
    }

    #[test]
    fn malformed() {
        for s in ["video/1/0/0", "/video/2/0/0", "/video/1/x/0", "/1/0", "/video//1/0/0", "/v/1/0/-1"] {
            assert!(matches!(s.parse::<ContentName>(), Err(ProtocolError::MalformedName(_))), "{s}");
        }
        assert!(ContentName::parse_checked("/v/1/3/0", 3).is_err());
        assert!(ContentName::parse_checked("/v/0/3/0", 3).is_ok());
    }
}
