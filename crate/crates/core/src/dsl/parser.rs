//! Line-oriented cell splitting followed by a small recursive-descent parser
//! for the statements inside code cells.

use std::collections::HashSet;
use std::sync::OnceLock;

use regex::Regex;

use super::ast::{Arg, ArgValue, Cell, CellRole, Expr, Literal, Program, Statement, VarName};
use crate::error::{Error, Result};

/// Words with meaning in general-purpose languages that the pipeline
/// language deliberately lacks.
const RESERVED: &[&str] = &[
    "for", "while", "if", "else", "elif", "def", "return", "import", "from", "lambda", "class",
    "with", "try", "except", "yield", "loop", "fn",
];

fn marker_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^#%%\s*\[(pipeline|inspection|text)\]").unwrap())
}

struct RawCell {
    role: CellRole,
    /// 1-based line number of the first content line.
    first_line: usize,
    lines: Vec<String>,
}

pub fn parse(source: &str) -> Result<Program> {
    let raw_cells = split_cells(source)?;
    let mut cells = Vec::with_capacity(raw_cells.len());
    let mut next_index = 0;
    for (index, raw) in raw_cells.into_iter().enumerate() {
        let statements = if raw.role == CellRole::Text {
            Vec::new()
        } else {
            let mut parser = Parser::new(&raw.lines, raw.first_line)?;
            parser.statements(&mut next_index)?
        };
        let raw_text = if raw.role == CellRole::Text {
            trim_blank_edges(&raw.lines).join("\n")
        } else {
            raw.lines.join("\n")
        };
        cells.push(Cell {
            index,
            role: raw.role,
            statements,
            raw_text,
            line: raw.first_line,
        });
    }
    let program = Program { cells };
    check_definitions(&program)?;
    Ok(program)
}

fn trim_blank_edges(lines: &[String]) -> &[String] {
    let start = lines.iter().position(|l| !l.trim().is_empty());
    match start {
        None => &[],
        Some(start) => {
            let end = lines.iter().rposition(|l| !l.trim().is_empty()).unwrap();
            &lines[start..=end]
        }
    }
}

fn split_cells(source: &str) -> Result<Vec<RawCell>> {
    let mut cells: Vec<RawCell> = Vec::new();
    let mut leading: Vec<String> = Vec::new();
    for (i, line) in source.split('\n').enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        let line_no = i + 1;
        if line.starts_with("#%%") {
            let Some(caps) = marker_regex().captures(line) else {
                return Err(Error::Syntax {
                    line: line_no,
                    column: 1,
                    message: "invalid cell marker, expected `#%% [pipeline|inspection|text]`"
                        .into(),
                });
            };
            let role: CellRole = caps[1].parse().expect("regex only admits known roles");
            cells.push(RawCell {
                role,
                first_line: line_no + 1,
                lines: Vec::new(),
            });
            continue;
        }
        match cells.last_mut() {
            Some(cell) => cell.lines.push(line.to_string()),
            None => leading.push(line.to_string()),
        }
    }
    // Code before the first marker forms an implicit pipeline cell.
    if leading.iter().any(|l| !l.trim().is_empty()) {
        cells.insert(
            0,
            RawCell {
                role: CellRole::Pipeline,
                first_line: 1,
                lines: leading,
            },
        );
    }
    // A trailing newline produces one empty last line; drop it.
    for cell in &mut cells {
        while cell.lines.last().is_some_and(|l| l.is_empty()) {
            cell.lines.pop();
        }
    }
    Ok(cells)
}

fn check_definitions(program: &Program) -> Result<()> {
    let mut defined: HashSet<&str> = HashSet::new();
    for stmt in program.statements() {
        for var in stmt.expr.referenced_vars() {
            if !defined.contains(var.as_str()) {
                return Err(Error::UndefinedVariable {
                    name: var.to_string(),
                    line: stmt.line,
                });
            }
        }
        for target in &stmt.targets {
            if !defined.insert(target.as_str()) {
                return Err(Error::DuplicateAssignment {
                    name: target.to_string(),
                    line: stmt.line,
                });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Number(f64),
    Bool(bool),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Eq,
    Dot,
    Newline,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Str(_) => "string literal".into(),
            Tok::Number(n) => format!("number {n}"),
            Tok::Bool(b) => format!("`{b}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Newline => "end of line".into(),
            Tok::Eof => "end of cell".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn lex(lines: &[String], first_line: usize) -> Result<Vec<Token>> {
    let mut tokens = Vec::new();
    // Newlines inside brackets do not terminate a statement.
    let mut depth: usize = 0;
    for (offset, text) in lines.iter().enumerate() {
        let line = first_line + offset;
        let chars: Vec<char> = text.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let column = i + 1;
            let push = |tokens: &mut Vec<Token>, tok| tokens.push(Token { tok, line, column });
            match c {
                ' ' | '\t' => i += 1,
                '#' => break,
                '(' | '[' => {
                    depth += 1;
                    push(
                        &mut tokens,
                        if c == '(' { Tok::LParen } else { Tok::LBracket },
                    );
                    i += 1;
                }
                ')' | ']' => {
                    depth = depth.saturating_sub(1);
                    push(
                        &mut tokens,
                        if c == ')' { Tok::RParen } else { Tok::RBracket },
                    );
                    i += 1;
                }
                ',' => {
                    push(&mut tokens, Tok::Comma);
                    i += 1;
                }
                '=' => {
                    push(&mut tokens, Tok::Eq);
                    i += 1;
                }
                '.' if !chars.get(i + 1).is_some_and(char::is_ascii_digit) => {
                    push(&mut tokens, Tok::Dot);
                    i += 1;
                }
                '"' | '\'' => {
                    let quote = c;
                    let mut value = String::new();
                    i += 1;
                    loop {
                        let Some(&ch) = chars.get(i) else {
                            return Err(syntax(line, column, "unterminated string literal"));
                        };
                        i += 1;
                        match ch {
                            '\\' => {
                                let esc = chars.get(i).copied().ok_or_else(|| {
                                    syntax(line, column, "unterminated string literal")
                                })?;
                                i += 1;
                                value.push(match esc {
                                    'n' => '\n',
                                    't' => '\t',
                                    'r' => '\r',
                                    '\\' | '"' | '\'' => esc,
                                    other => {
                                        return Err(syntax(
                                            line,
                                            i,
                                            format!("unknown escape `\\{other}`"),
                                        ))
                                    }
                                });
                            }
                            ch if ch == quote => break,
                            ch => value.push(ch),
                        }
                    }
                    push(&mut tokens, Tok::Str(value));
                }
                c if c.is_ascii_digit() || c == '-' || c == '.' => {
                    let start = i;
                    i += 1;
                    while i < chars.len() {
                        let d = chars[i];
                        let exp_sign = (d == '-' || d == '+') && matches!(chars[i - 1], 'e' | 'E');
                        if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                            i += 1;
                        } else {
                            break;
                        }
                    }
                    let text: String = chars[start..i].iter().collect();
                    let value: f64 = text
                        .parse()
                        .map_err(|_| syntax(line, column, format!("invalid number `{text}`")))?;
                    push(&mut tokens, Tok::Number(value));
                }
                c if c.is_alphabetic() || c == '_' => {
                    let start = i;
                    while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                        i += 1;
                    }
                    let word: String = chars[start..i].iter().collect();
                    if RESERVED.contains(&word.as_str()) {
                        return Err(syntax(line, column, format!("unexpected keyword `{word}`")));
                    }
                    let tok = match word.as_str() {
                        "true" | "True" => Tok::Bool(true),
                        "false" | "False" => Tok::Bool(false),
                        _ => Tok::Ident(word),
                    };
                    push(&mut tokens, tok);
                }
                other => {
                    return Err(syntax(
                        line,
                        column,
                        format!("unexpected character `{other}`"),
                    ));
                }
            }
        }
        if depth == 0 && tokens.last().is_some_and(|t| t.tok != Tok::Newline) {
            tokens.push(Token {
                tok: Tok::Newline,
                line,
                column: chars.len() + 1,
            });
        }
    }
    let (line, column) = tokens
        .last()
        .map(|t| (t.line, t.column))
        .unwrap_or((first_line, 1));
    tokens.push(Token {
        tok: Tok::Eof,
        line,
        column,
    });
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn new(lines: &[String], first_line: usize) -> Result<Self> {
        Ok(Parser {
            tokens: lex(lines, first_line)?,
            pos: 0,
        })
    }

    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn peek_at(&self, ahead: usize) -> &Tok {
        let idx = (self.pos + ahead).min(self.tokens.len() - 1);
        &self.tokens[idx].tok
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, expected: &str) -> Error {
        let t = self.peek();
        syntax(
            t.line,
            t.column,
            format!("expected {expected}, found {}", t.tok.describe()),
        )
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<Token> {
        if self.peek().tok == tok {
            Ok(self.bump())
        } else {
            Err(self.unexpected(expected))
        }
    }

    fn ident(&mut self, expected: &str) -> Result<String> {
        match &self.peek().tok {
            Tok::Ident(name) => {
                let name = name.clone();
                self.bump();
                Ok(name)
            }
            _ => Err(self.unexpected(expected)),
        }
    }

    fn statements(&mut self, next_index: &mut usize) -> Result<Vec<Statement>> {
        let mut out = Vec::new();
        loop {
            match self.peek().tok {
                Tok::Eof => return Ok(out),
                Tok::Newline => {
                    self.bump();
                }
                _ => {
                    let stmt = self.statement(*next_index)?;
                    *next_index += 1;
                    out.push(stmt);
                }
            }
        }
    }

    fn statement(&mut self, textual_index: usize) -> Result<Statement> {
        let line = self.peek().line;
        let mut targets = vec![VarName(self.ident("assignment target")?)];
        while self.peek().tok == Tok::Comma {
            self.bump();
            targets.push(VarName(self.ident("assignment target")?));
        }
        self.expect(Tok::Eq, "`=`")?;
        let expr = self.expr()?;
        match self.peek().tok {
            Tok::Newline | Tok::Eof => {}
            _ => return Err(self.unexpected("end of statement")),
        }
        Ok(Statement {
            targets,
            expr,
            textual_index,
            line,
        })
    }

    fn expr(&mut self) -> Result<Expr> {
        if let Tok::Ident(first) = self.peek().tok.clone() {
            match self.peek_at(1) {
                Tok::LParen => {
                    self.bump();
                    let args = self.call_args()?;
                    return Ok(Expr::Call {
                        callee: first,
                        receiver: None,
                        args,
                    });
                }
                Tok::Dot => {
                    self.bump();
                    self.bump();
                    let callee = self.ident("method name")?;
                    if self.peek().tok != Tok::LParen {
                        return Err(self.unexpected("`(`"));
                    }
                    let args = self.call_args()?;
                    return Ok(Expr::Call {
                        callee,
                        receiver: Some(VarName(first)),
                        args,
                    });
                }
                _ => {
                    self.bump();
                    return Ok(Expr::Var(VarName(first)));
                }
            }
        }
        Ok(Expr::Literal(self.literal()?))
    }

    fn call_args(&mut self) -> Result<Vec<Arg>> {
        self.expect(Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        if self.peek().tok == Tok::RParen {
            self.bump();
            return Ok(args);
        }
        loop {
            let name = match (&self.peek().tok, self.peek_at(1)) {
                (Tok::Ident(n), Tok::Eq) => {
                    let n = n.clone();
                    self.bump();
                    self.bump();
                    Some(n)
                }
                _ => None,
            };
            let value = match self.peek().tok.clone() {
                Tok::Ident(v) => {
                    self.bump();
                    if matches!(self.peek().tok, Tok::LParen | Tok::Dot) {
                        return Err(self.unexpected(
                            "`,` or `)` (nested calls must be bound to a variable first)",
                        ));
                    }
                    ArgValue::Var(VarName(v))
                }
                _ => ArgValue::Lit(self.literal()?),
            };
            args.push(Arg { name, value });
            match self.peek().tok {
                Tok::Comma => {
                    self.bump();
                    if self.peek().tok == Tok::RParen {
                        self.bump();
                        return Ok(args);
                    }
                }
                Tok::RParen => {
                    self.bump();
                    return Ok(args);
                }
                _ => return Err(self.unexpected("`,` or `)`")),
            }
        }
    }

    fn literal(&mut self) -> Result<Literal> {
        match self.peek().tok.clone() {
            Tok::Str(s) => {
                self.bump();
                Ok(Literal::Str(s))
            }
            Tok::Number(n) => {
                self.bump();
                Ok(Literal::Number(n))
            }
            Tok::Bool(b) => {
                self.bump();
                Ok(Literal::Bool(b))
            }
            Tok::LBracket => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    if self.peek().tok == Tok::RBracket {
                        self.bump();
                        return Ok(Literal::List(items));
                    }
                    items.push(self.literal()?);
                    match self.peek().tok {
                        Tok::Comma => {
                            self.bump();
                        }
                        Tok::RBracket => {}
                        _ => return Err(self.unexpected("`,` or `]`")),
                    }
                }
            }
            _ => Err(self.unexpected("expression")),
        }
    }
}
