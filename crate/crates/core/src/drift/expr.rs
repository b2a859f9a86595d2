use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    /// `log(max(z, e))`
    Logp,
    Log,
    Exp,
    Abs,
    /// `max(z, 0)`
    Max0,
}

impl Func {
    pub const ALL: [Func; 5] = [Func::Logp, Func::Log, Func::Exp, Func::Abs, Func::Max0];

    pub fn name(self) -> &'static str {
        match self {
            Func::Logp => "logp",
            Func::Log => "log",
            Func::Exp => "exp",
            Func::Abs => "abs",
            Func::Max0 => "max0",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn apply(self, z: f64) -> f64 {
        match self {
            Func::Logp => z.max(std::f64::consts::E).ln(),
            Func::Log => z.ln(),
            Func::Exp => z.exp(),
            Func::Abs => z.abs(),
            Func::Max0 => z.max(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    pub fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    X,
    Call(Func, Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::X => x,
            Expr::Call(f, arg) => f.apply(arg.eval(x)),
            Expr::Bin(op, l, r) => {
                let (a, b) = (l.eval(x), r.eval(x));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
        }
    }

    /// `Some(c)` when the expression does not depend on `x`.
    pub fn constant_value(&self) -> Option<f64> {
        if self.mentions_x() {
            None
        } else {
            Some(self.eval(0.0))
        }
    }

    pub fn mentions_x(&self) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::X => true,
            Expr::Call(_, a) => a.mentions_x(),
            Expr::Bin(_, l, r) => l.mentions_x() || r.mentions_x(),
        }
    }

    pub fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Bin(op, Box::new(l), Box::new(r))
    }

    pub fn call(f: Func, a: Expr) -> Expr {
        Expr::Call(f, Box::new(a))
    }
}

/// Fully parenthesised; re-parses to the same tree for any tree the parser
/// can produce (non-negative finite literals).
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) if *v < 0.0 => write!(f, "(0 - {:?})", -v),
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::X => f.write_str("x"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Bin(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
        }
    }
}
