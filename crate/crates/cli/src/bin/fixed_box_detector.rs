//! Stand-in detector process for the subprocess protocol. The arguments are
//! read six at a time as box lines (`class cx cy w h conf`); every frame
//! gets all of them.
//!
//! ```text
//! fixed-box-detector 2 0.5 0.5 0.1 0.2 0.9  0 0.3 0.5 0.1 0.2 0.6
//! ```

use std::io::{self, BufRead, Read, Write};
use std::process::ExitCode;

use ecgdet::detect::{format_box_line, parse_box_line, Detection};

fn main() -> ExitCode {
    let tokens: Vec<String> = std::env::args().skip(1).flat_map(|a| a.split_whitespace().map(str::to_string).collect::<Vec<_>>()).collect();
    if !tokens.len().is_multiple_of(6) {
        eprintln!("fixed-box-detector: expected groups of 6 values (class cx cy w h conf), got {}", tokens.len());
        return ExitCode::from(2);
    }
    let boxes: Result<Vec<Detection>, _> = tokens.chunks(6).map(|c| parse_box_line(&c.join(" "))).collect();
    let boxes = match boxes {
        Ok(b) => b,
        Err(e) => {
            eprintln!("fixed-box-detector: {e}");
            return ExitCode::from(2);
        }
    };
    match serve(&boxes) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fixed-box-detector: {e}");
            ExitCode::from(1)
        }
    }
}

fn serve(boxes: &[Detection]) -> io::Result<()> {
    let stdin = io::stdin();
    let mut input = stdin.lock();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut header = String::new();
    loop {
        header.clear();
        if input.read_line(&mut header)? == 0 {
            return Ok(());
        }
        let mut toks = header.split_whitespace();
        let (Some("FRAME"), Some(id), Some(len)) = (toks.next(), toks.next(), toks.next()) else {
            return Err(io::Error::new(io::ErrorKind::InvalidData, format!("bad header '{}'", header.trim_end())));
        };
        let len: u64 = len
            .parse()
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidData, "bad payload length"))?;
        io::copy(&mut (&mut input).take(len), &mut io::sink())?;
        writeln!(out, "DET {id} {}", boxes.len())?;
        for b in boxes {
            out.write_all(format_box_line(b).as_bytes())?;
        }
        out.flush()?;
    }
}
