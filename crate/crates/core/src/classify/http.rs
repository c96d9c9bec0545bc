//! HTTP/1.x start-line recognition.

pub const HTTP_PORT: u16 = 80;

const PREFIXES: [&[u8]; 7] = [
    b"GET ",
    b"POST ",
    b"HEAD ",
    b"PUT ",
    b"DELETE ",
    b"OPTIONS ",
    b"HTTP/",
];

/// Whether the payload opens with a printable request or status line.
pub fn is_start_line(payload: &[u8]) -> bool {
    if !PREFIXES.iter().any(|p| payload.starts_with(p)) {
        return false;
    }
    payload
        .iter()
        .take_while(|b| **b != b'\r' && **b != b'\n')
        .all(|b| b.is_ascii_graphic() || *b == b' ')
}

pub fn is_request(payload: &[u8]) -> bool {
    is_start_line(payload) && !payload.starts_with(b"HTTP/")
}

/// Host a request targets: the authority of an absolute URI, else the Host header.
pub fn request_host(payload: &[u8]) -> Option<String> {
    if !is_request(payload) {
        return None;
    }
    let text = String::from_utf8_lossy(payload);
    let mut lines = text.split("\r\n");
    let request_line = lines.next()?;
    let target = request_line.split(' ').nth(1)?;
    if let Some(rest) = target.strip_prefix("http://") {
        let authority = rest.split('/').next()?;
        return Some(strip_port(authority).to_ascii_lowercase());
    }
    lines
        .take_while(|l| !l.is_empty())
        .find_map(|l| {
            let (name, value) = l.split_once(':')?;
            name.trim().eq_ignore_ascii_case("host").then(|| strip_port(value.trim()).to_ascii_lowercase())
        })
}

fn strip_port(authority: &str) -> &str {
    authority.rsplit_once(':').map_or(authority, |(h, _)| h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn start_lines() {
        assert!(is_start_line(b"GET /generate_204 HTTP/1.1\r\nHost: x\r\n\r\n"));
        assert!(is_start_line(b"HTTP/1.1 204 No Content\r\n\r\n"));
        assert!(!is_start_line(b"GETX"));
        assert!(!is_start_line(b"GET \x00\x01\r\n"));
        assert!(!is_start_line(&[0x16, 0x03, 0x01]));
    }

    #[test]
    fn host_extraction() {
        let req = b"GET /generate_204 HTTP/1.1\r\nHost: connectivitycheck.gstatic.com\r\n\r\n";
        assert_eq!(request_host(req).as_deref(), Some("connectivitycheck.gstatic.com"));
        let abs = b"GET http://Example.org:8080/x HTTP/1.1\r\n\r\n";
        assert_eq!(request_host(abs).as_deref(), Some("example.org"));
        assert_eq!(request_host(b"HTTP/1.1 200 OK\r\n\r\n"), None);
    }
}
