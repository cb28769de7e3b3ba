use std::collections::HashSet;

use super::ast::{ArrayRef, AssignOp, BinOp, Expr, LoopVar, Stmt, TaskSpec};
use super::lexer::{tokenize, Tok, Token};
use crate::error::{Error, Result};

/// Names treated as externally bound by [`parse_task`].
pub const DEFAULT_EXTERNALS: [&str; 3] = ["M", "N", "K"];

/// Parse a `where` block, with `M`, `N` and `K` as the only external names.
pub fn parse_task(source: &str) -> Result<TaskSpec> {
    parse_task_with(source, &DEFAULT_EXTERNALS)
}

/// Parse a `where` block. Identifiers in ranges and subscripts must be loop
/// variables or one of `externals`.
pub fn parse_task_with(source: &str, externals: &[&str]) -> Result<TaskSpec> {
    let tokens = tokenize(source)?;
    let mut p = Parser { tokens, pos: 0, uses: Vec::new() };
    let task = p.task()?;

    let bound: HashSet<&str> = task
        .loop_vars
        .iter()
        .map(|v| v.name.as_str())
        .chain(externals.iter().copied())
        .collect();
    if let Some((name, line, column)) = p.uses.iter().find(|(n, _, _)| !bound.contains(n.as_str())) {
        return Err(Error::UnboundVariable {
            name: name.clone(),
            line: *line,
            column: *column,
        });
    }
    Ok(task)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    /// Identifiers that appear in range bounds or array subscripts.
    uses: Vec<(String, usize, usize)>,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error_at(&self, tok: &Token, message: String) -> Error {
        Error::Parse {
            line: tok.line,
            column: tok.column,
            message,
        }
    }

    fn expect(&mut self, want: Tok, context: &str) -> Result<Token> {
        let t = self.peek().clone();
        if t.tok == want {
            Ok(self.bump())
        } else {
            let what = Token { tok: want, line: 0, column: 0 }.tok.describe();
            Err(self.error_at(&t, format!("expected {what} {context}, found {}", t.tok.describe())))
        }
    }

    fn ident(&mut self, context: &str) -> Result<Token> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Ident(_) => Ok(self.bump()),
            _ => Err(self.error_at(&t, format!("expected identifier {context}, found {}", t.tok.describe()))),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<()> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Ident(s) if s == kw => {
                self.bump();
                Ok(())
            }
            other => Err(self.error_at(&t, format!("expected `{kw}`, found {}", other.describe()))),
        }
    }

    fn task(&mut self) -> Result<TaskSpec> {
        self.keyword("where")?;
        self.expect(Tok::LParen, "after `where`")?;
        let mut loop_vars = vec![self.loop_var()?];
        while matches!(&self.peek().tok, Tok::Ident(s) if s == "and") {
            self.bump();
            let t = self.peek().clone();
            let v = self.loop_var()?;
            if loop_vars.iter().any(|w: &LoopVar| w.name == v.name) {
                return Err(self.error_at(&t, format!("loop variable `{}` declared twice", v.name)));
            }
            loop_vars.push(v);
        }
        self.expect(Tok::RParen, "to close the loop variable list")?;
        self.expect(Tok::LBrace, "to open the loop body")?;
        let statement = self.statement()?;
        if self.peek().tok == Tok::Semi {
            self.bump();
        }
        let t = self.peek().clone();
        if t.tok != Tok::RBrace {
            let msg = if matches!(t.tok, Tok::Ident(_)) {
                "the loop body must contain exactly one statement".to_string()
            } else {
                format!("expected `}}` after the statement, found {}", t.tok.describe())
            };
            return Err(self.error_at(&t, msg));
        }
        self.bump();
        self.expect(Tok::Eof, "after the loop body")?;
        Ok(TaskSpec { loop_vars, statement })
    }

    fn loop_var(&mut self) -> Result<LoopVar> {
        let name = match self.ident("naming a loop variable")?.tok {
            Tok::Ident(s) => s,
            _ => unreachable!(),
        };
        self.keyword("in")?;
        let open = self.expect(Tok::LBracket, "to open the range")?;
        let start = self.tracked(Self::expr)?;
        self.expect(Tok::DotDot, "between range bounds")?;
        let end = self.tracked(Self::expr)?;
        let t = self.peek().clone();
        if t.tok != Tok::RBracket {
            return Err(self.error_at(
                &open,
                format!(
                    "unclosed `[`: expected `]` to close the range, found {} at {}:{}",
                    t.tok.describe(),
                    t.line,
                    t.column
                ),
            ));
        }
        self.bump();
        Ok(LoopVar { name, start, end })
    }

    /// Parse with every identifier recorded as a use that must be bound.
    fn tracked(&mut self, f: fn(&mut Self) -> Result<Expr>) -> Result<Expr> {
        let from = self.pos;
        let e = f(self)?;
        for t in &self.tokens[from..self.pos] {
            if let Tok::Ident(s) = &t.tok {
                self.uses.push((s.clone(), t.line, t.column));
            }
        }
        Ok(e)
    }

    fn statement(&mut self) -> Result<Stmt> {
        let t = self.peek().clone();
        let target = match self.primary()? {
            Expr::Index(r) => r,
            _ => return Err(self.error_at(&t, "the statement must assign to an array element".into())),
        };
        let op = match self.bump().tok {
            Tok::Assign => AssignOp::Assign,
            Tok::PlusAssign => AssignOp::AddAssign,
            other => {
                let prev = self.tokens[self.pos.saturating_sub(1)].clone();
                return Err(self.error_at(&prev, format!("expected `=` or `+=`, found {}", other.describe())));
            }
        };
        let value = self.expr()?;
        Ok(Stmt { target, op, value })
    }

    fn expr(&mut self) -> Result<Expr> {
        self.binary(1)
    }

    fn binop(tok: &Tok) -> Option<BinOp> {
        Some(match tok {
            Tok::Plus => BinOp::Add,
            Tok::Minus => BinOp::Sub,
            Tok::Star => BinOp::Mul,
            Tok::Slash => BinOp::Div,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::EqEq => BinOp::Eq,
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr> {
        if min_prec > 3 {
            return self.primary();
        }
        let mut lhs = self.binary(min_prec + 1)?;
        while let Some(op) = Self::binop(&self.peek().tok).filter(|op| op.precedence() == min_prec) {
            self.bump();
            let rhs = self.binary(min_prec + 1)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn primary(&mut self) -> Result<Expr> {
        let t = self.bump();
        match t.tok.clone() {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Minus => match self.peek().tok {
                Tok::Num(v) => {
                    self.bump();
                    Ok(Expr::Num(-v))
                }
                _ => Err(self.error_at(&t, "unary minus is only allowed on numeric literals".into())),
            },
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "to close the parenthesis")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if self.peek().tok != Tok::LBracket {
                    return Ok(Expr::Var(name));
                }
                let mut indices = Vec::new();
                while self.peek().tok == Tok::LBracket {
                    self.bump();
                    indices.push(self.tracked(Self::expr)?);
                    self.expect(Tok::RBracket, "to close the subscript")?;
                }
                if indices.len() > 2 {
                    return Err(self.error_at(&t, format!("`{name}` has {} subscripts; at most 2 are supported", indices.len())));
                }
                Ok(Expr::Index(ArrayRef { name, indices }))
            }
            other => Err(self.error_at(&t, format!("expected an expression, found {}", other.describe()))),
        }
    }
}
