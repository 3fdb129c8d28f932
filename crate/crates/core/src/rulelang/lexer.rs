use std::fmt;

use super::{ParseError, ParseErrorKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Var(String),
    Str(String),
    Int(i64),
    LParen,
    RParen,
    Comma,
    Colon,
    Semi,
    Dot,
    EqEq,
    NotEq,
    Minus,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Var(s) => write!(f, "`{s}`"),
            Tok::Str(s) => write!(f, "string {s:?}"),
            Tok::Int(i) => write!(f, "integer {i}"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::Semi => f.write_str("`;`"),
            Tok::Dot => f.write_str("`.`"),
            Tok::EqEq => f.write_str("`==`"),
            Tok::NotEq => f.write_str("`!=`"),
            Tok::Minus => f.write_str("`-`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
}

pub fn tokenize(source: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = source.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    let err = |line, column, found: String| ParseError {
        line,
        column,
        kind: ParseErrorKind::Syntax { expected: vec![], found },
    };

    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let advance = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => advance(1, &mut i, &mut col),
            '/' if chars.get(i + 1) == Some(&'/') => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '/' if chars.get(i + 1) == Some(&'*') => {
                i += 2;
                col += 2;
                loop {
                    match chars.get(i) {
                        None => return Err(err(tl, tc, "unterminated comment".into())),
                        Some('*') if chars.get(i + 1) == Some(&'/') => {
                            i += 2;
                            col += 2;
                            break;
                        }
                        Some('\n') => {
                            i += 1;
                            line += 1;
                            col = 1;
                        }
                        Some(_) => {
                            i += 1;
                            col += 1;
                        }
                    }
                }
            }
            '"' => {
                let mut s = String::new();
                i += 1;
                col += 1;
                loop {
                    match chars.get(i) {
                        None | Some('\n') => return Err(err(tl, tc, "unterminated string".into())),
                        Some('"') => {
                            i += 1;
                            col += 1;
                            break;
                        }
                        Some('\\') => {
                            let escaped = match chars.get(i + 1) {
                                Some('n') => '\n',
                                Some('t') => '\t',
                                Some(&e @ ('"' | '\\')) => e,
                                _ => return Err(err(line, col, "invalid escape".into())),
                            };
                            s.push(escaped);
                            i += 2;
                            col += 2;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            i += 1;
                            col += 1;
                        }
                    }
                }
                out.push(Token { tok: Tok::Str(s), line: tl, column: tc });
            }
            '$' => {
                let start = i;
                i += 1;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                if i == start + 1 {
                    return Err(err(tl, tc, "`$` without a name".into()));
                }
                col += i - start;
                out.push(Token { tok: Tok::Var(chars[start..i].iter().collect()), line: tl, column: tc });
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                col += i - start;
                out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), line: tl, column: tc });
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                col += i - start;
                let text: String = chars[start..i].iter().collect();
                let value = text.parse().map_err(|_| err(tl, tc, format!("integer {text} out of range")))?;
                out.push(Token { tok: Tok::Int(value), line: tl, column: tc });
            }
            _ => {
                let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
                let (tok, n) = match (c, two.as_str()) {
                    (_, "==") => (Tok::EqEq, 2),
                    (_, "!=") => (Tok::NotEq, 2),
                    ('(', _) => (Tok::LParen, 1),
                    (')', _) => (Tok::RParen, 1),
                    (',', _) => (Tok::Comma, 1),
                    (':', _) => (Tok::Colon, 1),
                    (';', _) => (Tok::Semi, 1),
                    ('.', _) => (Tok::Dot, 1),
                    ('-', _) => (Tok::Minus, 1),
                    _ => return Err(err(tl, tc, format!("unexpected character {c:?}"))),
                };
                advance(n, &mut i, &mut col);
                out.push(Token { tok, line: tl, column: tc });
            }
        }
    }
    out.push(Token { tok: Tok::Eof, line, column: col });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn lexes_rule_fragments() {
        assert_eq!(
            toks("$pca : Pca(principal.id == $pid) // trailing\n salience -100"),
            vec![
                Tok::Var("$pca".into()),
                Tok::Colon,
                Tok::Ident("Pca".into()),
                Tok::LParen,
                Tok::Ident("principal".into()),
                Tok::Dot,
                Tok::Ident("id".into()),
                Tok::EqEq,
                Tok::Var("$pid".into()),
                Tok::RParen,
                Tok::Ident("salience".into()),
                Tok::Minus,
                Tok::Int(100),
                Tok::Eof,
            ]
        );
    }

    #[test]
    fn tracks_positions_across_comments() {
        let t = tokenize("/* a\n b */ x\n  \"s\\\"q\"").unwrap();
        assert_eq!((t[0].line, t[0].column), (2, 7));
        assert_eq!(t[1].tok, Tok::Str("s\"q".into()));
        assert_eq!((t[1].line, t[1].column), (3, 3));
    }

    #[test]
    fn rejects_stray_characters() {
        let e = tokenize("rule \"x\" @").unwrap_err();
        assert_eq!((e.line, e.column), (1, 10));
        assert!(tokenize("\"open").is_err());
    }
}
