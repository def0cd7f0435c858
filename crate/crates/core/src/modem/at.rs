//! The AT-command grammar: commands are ASCII lines ending in CR (0x0D),
//! except an SMS body, which ends in Ctrl-Z (0x1A), and a data payload,
//! which is length-framed by the preceding `AT+CIPSEND=<len>`.
//!
//! Responses are framed `\r\n<text>\r\n`; the input prompt `"> "` is bare.

use std::fmt;

/// Longest accepted SMS body (single-part text mode).
pub const MAX_SMS_BODY: usize = 160;
/// Longest accepted host name in `AT+CIPSTART`.
pub const MAX_HOST_LEN: usize = 253;
/// Ceiling on a `AT+CIPSEND` length, to keep hostile streams from pinning
/// the framer in payload mode for gigabytes.
pub const MAX_PAYLOAD_LEN: usize = 1 << 20;

/// Body/payload terminator (Ctrl-Z).
pub const BODY_TERMINATOR: u8 = 0x1A;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AtCommand {
    /// `AT` — liveness check.
    Attention,
    /// `AT+CMGF=<0|1>` — select SMS mode; only text mode (1) is supported.
    SetTextMode(bool),
    /// `AT+CMGS="<dest>"` — begin an SMS to `+` followed by 7–15 digits.
    SendSms(String),
    /// The body that follows `SendSms`, normally terminated by Ctrl-Z.
    SmsBody { text: String, terminated: bool },
    /// `AT+CREG?` — network registration query.
    RegistrationQuery,
    /// `AT+CIPSTART="<host>",<port>` — open the data channel.
    DataOpen { host: String, port: u16 },
    /// `AT+CIPSEND=<len>` — announce a payload of exactly `len` bytes.
    DataSend(usize),
    /// The raw payload bytes after `DataSend` (length-framed, no grammar).
    DataPayload(Vec<u8>),
    /// `AT+CIPCLOSE` — close the data channel.
    DataClose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Empty,
    UnknownCommand,
    BadDestination,
    BadArgument,
    BodyTooLong,
    BodyNotAscii,
}

/// A rejected input unit; `span` carries the offending bytes (lossy UTF-8,
/// truncated for huge inputs).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub span: String,
}

impl ParseError {
    fn new(kind: ParseErrorKind, span: &[u8]) -> Self {
        // Truncate on bytes before the lossy conversion so a multi-byte
        // sequence at the cut can't land us off a char boundary.
        let truncated = span.len() > 64;
        let mut span = String::from_utf8_lossy(&span[..span.len().min(64)]).into_owned();
        if truncated {
            span.push_str("...");
        }
        ParseError { kind, span }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            ParseErrorKind::Empty => "empty command unit",
            ParseErrorKind::UnknownCommand => "unknown command",
            ParseErrorKind::BadDestination => "malformed SMS destination",
            ParseErrorKind::BadArgument => "malformed argument",
            ParseErrorKind::BodyTooLong => "SMS body exceeds 160 characters",
            ParseErrorKind::BodyNotAscii => "SMS body is not ASCII",
        };
        write!(f, "{what}: {:?}", self.span)
    }
}

impl std::error::Error for ParseError {}

/// True for `+` followed by 7–15 digits.
pub fn valid_destination(dest: &str) -> bool {
    let Some(digits) = dest.strip_prefix('+') else {
        return false;
    };
    (7..=15).contains(&digits.len()) && digits.bytes().all(|b| b.is_ascii_digit())
}

fn valid_host(host: &str) -> bool {
    !host.is_empty()
        && host.len() <= MAX_HOST_LEN
        && host
            .bytes()
            .all(|b| (0x21..=0x7e).contains(&b) && b != b'"' && b != b',')
}

/// Parse one input unit: a CR-terminated command line, a Ctrl-Z-terminated
/// SMS body, or (without either terminator) an unterminated body fragment.
/// The command head is case-insensitive; arguments are not.
pub fn parse_at(unit: &[u8]) -> Result<AtCommand, ParseError> {
    match unit.last() {
        None => Err(ParseError::new(ParseErrorKind::Empty, unit)),
        Some(&BODY_TERMINATOR) => parse_body(&unit[..unit.len() - 1], true),
        Some(&b'\r') => parse_command(&unit[..unit.len() - 1]),
        Some(_) => parse_body(unit, false),
    }
}

fn parse_body(bytes: &[u8], terminated: bool) -> Result<AtCommand, ParseError> {
    if !bytes.is_ascii() || bytes.contains(&BODY_TERMINATOR) {
        return Err(ParseError::new(ParseErrorKind::BodyNotAscii, bytes));
    }
    if bytes.len() > MAX_SMS_BODY {
        return Err(ParseError::new(ParseErrorKind::BodyTooLong, bytes));
    }
    Ok(AtCommand::SmsBody {
        text: String::from_utf8(bytes.to_vec()).expect("checked ASCII"),
        terminated,
    })
}

fn parse_command(line: &[u8]) -> Result<AtCommand, ParseError> {
    if line.is_empty() {
        return Err(ParseError::new(ParseErrorKind::Empty, line));
    }
    let Ok(text) = std::str::from_utf8(line) else {
        return Err(ParseError::new(ParseErrorKind::UnknownCommand, line));
    };
    // Split the head (up to '=', or the whole line) for case folding.
    let (head, args) = match text.split_once('=') {
        Some((h, a)) => (h, Some(a)),
        None => (text, None),
    };
    let head_upper = head.to_ascii_uppercase();
    match (head_upper.as_str(), args) {
        ("AT", None) => Ok(AtCommand::Attention),
        ("AT+CREG?", None) => Ok(AtCommand::RegistrationQuery),
        ("AT+CIPCLOSE", None) => Ok(AtCommand::DataClose),
        ("AT+CMGF", Some("0")) => Ok(AtCommand::SetTextMode(false)),
        ("AT+CMGF", Some("1")) => Ok(AtCommand::SetTextMode(true)),
        ("AT+CMGF", Some(_)) => Err(ParseError::new(ParseErrorKind::BadArgument, line)),
        ("AT+CMGS", Some(arg)) => {
            let dest = unquote(arg)
                .ok_or_else(|| ParseError::new(ParseErrorKind::BadDestination, line))?;
            if !valid_destination(dest) {
                return Err(ParseError::new(ParseErrorKind::BadDestination, line));
            }
            Ok(AtCommand::SendSms(dest.to_string()))
        }
        ("AT+CIPSTART", Some(arg)) => {
            let (host_part, port_part) = arg
                .rsplit_once(',')
                .ok_or_else(|| ParseError::new(ParseErrorKind::BadArgument, line))?;
            let host = unquote(host_part)
                .filter(|h| valid_host(h))
                .ok_or_else(|| ParseError::new(ParseErrorKind::BadArgument, line))?;
            let port: u16 = port_part
                .parse()
                .map_err(|_| ParseError::new(ParseErrorKind::BadArgument, line))?;
            if port == 0 {
                return Err(ParseError::new(ParseErrorKind::BadArgument, line));
            }
            Ok(AtCommand::DataOpen {
                host: host.to_string(),
                port,
            })
        }
        ("AT+CIPSEND", Some(arg)) => {
            let len: usize = arg
                .parse()
                .map_err(|_| ParseError::new(ParseErrorKind::BadArgument, line))?;
            if len == 0 || len > MAX_PAYLOAD_LEN {
                return Err(ParseError::new(ParseErrorKind::BadArgument, line));
            }
            Ok(AtCommand::DataSend(len))
        }
        _ => Err(ParseError::new(ParseErrorKind::UnknownCommand, line)),
    }
}

/// Strip one pair of surrounding double quotes; the content must not itself
/// contain a quote.
fn unquote(s: &str) -> Option<&str> {
    let inner = s.strip_prefix('"')?.strip_suffix('"')?;
    if inner.contains('"') {
        None
    } else {
        Some(inner)
    }
}

/// Render a command back to its on-wire bytes. `DataPayload` has no line
/// grammar (it is length-framed by the preceding `DataSend`), so it
/// serializes to its raw bytes and is the one variant `parse_at` cannot
/// reconstruct on its own.
pub fn serialize_command(cmd: &AtCommand) -> Vec<u8> {
    match cmd {
        AtCommand::Attention => b"AT\r".to_vec(),
        AtCommand::SetTextMode(flag) => {
            format!("AT+CMGF={}\r", if *flag { 1 } else { 0 }).into_bytes()
        }
        AtCommand::SendSms(dest) => format!("AT+CMGS=\"{dest}\"\r").into_bytes(),
        AtCommand::SmsBody { text, terminated } => {
            let mut bytes = text.as_bytes().to_vec();
            if *terminated {
                bytes.push(BODY_TERMINATOR);
            }
            bytes
        }
        AtCommand::RegistrationQuery => b"AT+CREG?\r".to_vec(),
        AtCommand::DataOpen { host, port } => {
            format!("AT+CIPSTART=\"{host}\",{port}\r").into_bytes()
        }
        AtCommand::DataSend(len) => format!("AT+CIPSEND={len}\r").into_bytes(),
        AtCommand::DataPayload(bytes) => bytes.clone(),
        AtCommand::DataClose => b"AT+CIPCLOSE\r".to_vec(),
    }
}

/// Everything the modem can say back.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtResponse {
    Ok,
    Error,
    /// Input prompt for an SMS body or a data payload.
    Prompt,
    /// SMS accepted; carries the lifetime message count.
    CmgsAck(u64),
    /// SMS-service failure, e.g. 305 "Invalid text mode parameter".
    CmsError(u16),
    /// Registered on the home network.
    RegistrationStatus,
    /// Data channel opened.
    Connect,
    /// Payload delivered over the data channel.
    SendOk,
    /// Data channel closed.
    Closed,
}

/// Byte-exact response framing: `\r\n<text>\r\n` per line, prompt bare.
pub fn serialize_response(resp: &AtResponse) -> Vec<u8> {
    match resp {
        AtResponse::Ok => b"\r\nOK\r\n".to_vec(),
        AtResponse::Error => b"\r\nERROR\r\n".to_vec(),
        AtResponse::Prompt => b"> ".to_vec(),
        AtResponse::CmgsAck(n) => format!("\r\n+CMGS: {n}\r\n\r\nOK\r\n").into_bytes(),
        AtResponse::CmsError(code) => format!("\r\n+CMS ERROR: {code}\r\n").into_bytes(),
        AtResponse::RegistrationStatus => b"\r\n+CREG: 0,1\r\n\r\nOK\r\n".to_vec(),
        AtResponse::Connect => b"\r\nCONNECT\r\n".to_vec(),
        AtResponse::SendOk => b"\r\nSEND OK\r\n".to_vec(),
        AtResponse::Closed => b"\r\nCLOSED\r\n".to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn the_grammar_examples_parse() {
        assert_eq!(parse_at(b"AT\r"), Ok(AtCommand::Attention));
        assert_eq!(
            parse_at(b"AT+CMGS=\"+15551234567\"\r"),
            Ok(AtCommand::SendSms("+15551234567".to_string()))
        );
        let err = parse_at(b"AT+CMGS=\"12345\"\r").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::BadDestination);
    }

    #[test]
    fn the_head_is_case_insensitive() {
        assert_eq!(parse_at(b"at\r"), Ok(AtCommand::Attention));
        assert_eq!(parse_at(b"at+cmgf=1\r"), Ok(AtCommand::SetTextMode(true)));
        assert_eq!(parse_at(b"At+CReg?\r"), Ok(AtCommand::RegistrationQuery));
        assert_eq!(parse_at(b"at+cipsend=42\r"), Ok(AtCommand::DataSend(42)));
    }

    #[test]
    fn arguments_are_case_sensitive_and_validated() {
        assert_eq!(
            parse_at(b"AT+CIPSTART=\"Example.Net\",9000\r"),
            Ok(AtCommand::DataOpen {
                host: "Example.Net".to_string(),
                port: 9000
            })
        );
        for bad in [
            &b"AT+CIPSTART=\"h\",0\r"[..],
            b"AT+CIPSTART=\"h\",65536\r",
            b"AT+CIPSTART=\"h\",x\r",
            b"AT+CIPSTART=h,80\r",
            b"AT+CIPSTART=\"\",80\r",
            b"AT+CMGF=2\r",
            b"AT+CIPSEND=0\r",
            b"AT+CIPSEND=9999999999\r",
        ] {
            assert!(parse_at(bad).is_err(), "{:?}", String::from_utf8_lossy(bad));
        }
    }

    #[test]
    fn destination_shape_is_enforced() {
        assert!(valid_destination("+1234567"));
        assert!(valid_destination("+123456789012345"));
        assert!(!valid_destination("+123456"));
        assert!(!valid_destination("+1234567890123456"));
        assert!(!valid_destination("1234567"));
        assert!(!valid_destination("+12345a7"));
        assert!(!valid_destination(""));
    }

    #[test]
    fn unknown_heads_are_rejected_with_the_span() {
        let err = parse_at(b"AT+BOGUS\r").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownCommand);
        assert_eq!(err.span, "AT+BOGUS");
    }

    #[test]
    fn bodies_parse_with_and_without_the_terminator() {
        assert_eq!(
            parse_at(b"hello\x1a"),
            Ok(AtCommand::SmsBody {
                text: "hello".to_string(),
                terminated: true
            })
        );
        assert_eq!(
            parse_at(b"hello"),
            Ok(AtCommand::SmsBody {
                text: "hello".to_string(),
                terminated: false
            })
        );
    }

    #[test]
    fn oversized_and_non_ascii_bodies_are_rejected() {
        let long = vec![b'a'; 161];
        let mut unit = long.clone();
        unit.push(BODY_TERMINATOR);
        assert_eq!(
            parse_at(&unit).unwrap_err().kind,
            ParseErrorKind::BodyTooLong
        );
        let mut exact = vec![b'a'; 160];
        exact.push(BODY_TERMINATOR);
        assert!(parse_at(&exact).is_ok());
        assert_eq!(
            parse_at(b"caf\xc3\xa9\x1a").unwrap_err().kind,
            ParseErrorKind::BodyNotAscii
        );
    }

    #[test]
    fn response_framing_is_byte_exact() {
        assert_eq!(serialize_response(&AtResponse::Ok), b"\r\nOK\r\n");
        assert_eq!(
            serialize_response(&AtResponse::CmgsAck(7)),
            b"\r\n+CMGS: 7\r\n\r\nOK\r\n"
        );
        assert_eq!(serialize_response(&AtResponse::Prompt), b"> ");
        assert_eq!(
            serialize_response(&AtResponse::CmsError(305)),
            b"\r\n+CMS ERROR: 305\r\n"
        );
        assert_eq!(
            serialize_response(&AtResponse::RegistrationStatus),
            b"\r\n+CREG: 0,1\r\n\r\nOK\r\n"
        );
    }

    #[test]
    fn line_grammar_commands_round_trip() {
        let cases = vec![
            AtCommand::Attention,
            AtCommand::SetTextMode(true),
            AtCommand::SetTextMode(false),
            AtCommand::SendSms("+15550000911".to_string()),
            AtCommand::SmsBody {
                text: "EMERGENCY ALERT: LPG gas leakage found in your home".to_string(),
                terminated: true,
            },
            AtCommand::RegistrationQuery,
            AtCommand::DataOpen {
                host: "127.0.0.1".to_string(),
                port: 9999,
            },
            AtCommand::DataSend(117),
            AtCommand::DataClose,
        ];
        for cmd in cases {
            let bytes = serialize_command(&cmd);
            assert_eq!(parse_at(&bytes), Ok(cmd.clone()), "{cmd:?}");
        }
    }
}
