//===- parser.cc - Kernel DSL lexer, parser and printer -------------------===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "tcmc/frontend.h"

#include <bit>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace tcmc {

ParseError::ParseError(SourceSpan span, const std::string &msg)
    : std::runtime_error(std::to_string(span.line) + ":" +
                         std::to_string(span.column) + ": " + msg),
      span_(span), msg_(msg) {}

const Param *KernelAst::findParam(const std::string &n) const {
  for (const auto &p : params)
    if (p.name == n)
      return &p;
  return nullptr;
}

namespace {

enum class Tok { kIdent, kNumber, kPunct, kEnd };

struct Token {
  Tok kind = Tok::kEnd;
  std::string text;
  SourceSpan span;
};

class Lexer {
public:
  explicit Lexer(const std::string &src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      skipTrivia();
      Token t;
      t.span = {line_, col_, 0};
      if (pos_ >= src_.size()) {
        out.push_back(t);
        return out;
      }
      char c = src_[pos_];
      size_t start = pos_;
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
                src_[pos_] == '_'))
          advance();
        t.kind = Tok::kIdent;
      } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        lexNumber();
        t.kind = Tok::kNumber;
      } else if (std::string("(){},:;=+-*/").find(c) != std::string::npos) {
        advance();
        t.kind = Tok::kPunct;
      } else {
        throw ParseError({line_, col_, 1},
                         std::string("unexpected character '") + c + "'");
      }
      t.text = src_.substr(start, pos_ - start);
      t.span.length = static_cast<int>(t.text.size());
      out.push_back(std::move(t));
    }
  }

private:
  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skipTrivia() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else if (c == '/' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '/') {
        while (pos_ < src_.size() && src_[pos_] != '\n')
          advance();
      } else {
        return;
      }
    }
  }

  void lexNumber() {
    SourceSpan at{line_, col_, 0};
    bool digits = false;
    while (pos_ < src_.size() &&
           std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
      advance();
      digits = true;
    }
    if (pos_ < src_.size() && src_[pos_] == '.') {
      advance();
      while (pos_ < src_.size() &&
             std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        advance();
        digits = true;
      }
    }
    if (!digits)
      throw ParseError({at.line, at.column, 1}, "malformed number");
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      advance();
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-'))
        advance();
      if (pos_ >= src_.size() ||
          !std::isdigit(static_cast<unsigned char>(src_[pos_])))
        throw ParseError({at.line, at.column, col_ - at.column},
                         "malformed exponent");
      while (pos_ < src_.size() &&
             std::isdigit(static_cast<unsigned char>(src_[pos_])))
        advance();
    }
  }

  const std::string &src_;
  size_t pos_ = 0;
  int line_ = 1, col_ = 1;
};

const std::set<std::string> kUnaryFns = {"exp", "tanh", "sqrt", "rsqrt"};
const std::set<std::string> kReserved = {
    "kernel", "const", "store", "in",    "out", "col", "axis",    "load",
    "exp",    "tanh",  "sqrt",  "rsqrt", "max", "sum", "NUM_COLS"};

class Parser {
public:
  explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  KernelAst run() {
    KernelAst ast;
    expectWord("kernel");
    ast.name = expectIdent("kernel name").text;
    expect("(");
    if (!peekIs(")")) {
      do {
        Param p;
        Token name = expectIdent("parameter name");
        p.name = name.text;
        p.span = name.span;
        expect(":");
        Token kind = expectIdent("parameter kind");
        if (kind.text == "in")
          p.kind = ParamKind::kIn;
        else if (kind.text == "out")
          p.kind = ParamKind::kOut;
        else if (kind.text == "col")
          p.kind = ParamKind::kCol;
        else
          throw ParseError(kind.span, "parameter kind must be in, out or col");
        ast.params.push_back(std::move(p));
      } while (accept(","));
    }
    expect(")");
    expect("{");
    while (!peekIs("}")) {
      if (peek().kind == Tok::kEnd)
        throw ParseError(peek().span, "expected '}'");
      ast.stmts.push_back(parseStmt());
    }
    expect("}");
    if (peek().kind != Tok::kEnd)
      throw ParseError(peek().span, "unexpected text after kernel");
    return ast;
  }

private:
  const Token &peek() const { return toks_[pos_]; }
  bool peekIs(const char *p) const {
    return peek().kind == Tok::kPunct && peek().text == p;
  }
  Token next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }
  bool accept(const char *p) {
    if (!peekIs(p))
      return false;
    ++pos_;
    return true;
  }
  std::string describe(const Token &t) const {
    return t.kind == Tok::kEnd ? "end of input" : "'" + t.text + "'";
  }
  void expect(const char *p) {
    if (!accept(p))
      throw ParseError(peek().span, std::string("expected '") + p +
                                        "', found " + describe(peek()));
  }
  Token expectIdent(const char *what) {
    if (peek().kind != Tok::kIdent)
      throw ParseError(peek().span, std::string("expected ") + what +
                                        ", found " + describe(peek()));
    return next();
  }
  void expectWord(const char *w) {
    if (peek().kind != Tok::kIdent || peek().text != w)
      throw ParseError(peek().span, std::string("expected '") + w +
                                        "', found " + describe(peek()));
    next();
  }

  Stmt parseStmt() {
    Stmt s;
    s.span = peek().span;
    Token head = expectIdent("statement");
    if (head.text == "const") {
      s.kind = StmtKind::kConst;
      s.target = expectIdent("constant name").text;
      expect("=");
      bool neg = accept("-");
      if (peek().kind != Tok::kNumber)
        throw ParseError(peek().span, "constant value must be a number");
      auto e = std::make_shared<Expr>();
      e->span = peek().span;
      e->number = std::strtof(next().text.c_str(), nullptr);
      if (neg)
        e->number = -e->number;
      s.value = e;
    } else if (head.text == "store") {
      s.kind = StmtKind::kStore;
      expect("(");
      s.target = expectIdent("output parameter").text;
      expect(",");
      s.value = parseExpr();
      expect(")");
    } else {
      s.kind = StmtKind::kAssign;
      s.target = head.text;
      expect("=");
      s.value = parseExpr();
    }
    expect(";");
    return s;
  }

  static ExprPtr binary(ExprKind k, ExprPtr l, ExprPtr r, SourceSpan span) {
    auto e = std::make_shared<Expr>();
    e->kind = k;
    e->span = span;
    e->args = {std::move(l), std::move(r)};
    return e;
  }

  ExprPtr parseExpr() {
    ExprPtr lhs = parseTerm();
    while (peekIs("+") || peekIs("-")) {
      Token op = next();
      lhs = binary(op.text == "+" ? ExprKind::kAdd : ExprKind::kSub, lhs,
                   parseTerm(), op.span);
    }
    return lhs;
  }

  ExprPtr parseTerm() {
    ExprPtr lhs = parseUnary();
    while (peekIs("*") || peekIs("/")) {
      Token op = next();
      lhs = binary(op.text == "*" ? ExprKind::kMul : ExprKind::kDiv, lhs,
                   parseUnary(), op.span);
    }
    return lhs;
  }

  ExprPtr parseUnary() {
    if (peekIs("-")) {
      Token op = next();
      auto e = std::make_shared<Expr>();
      e->kind = ExprKind::kNeg;
      e->span = op.span;
      e->args = {parseUnary()};
      return e;
    }
    return parsePrimary();
  }

  ExprPtr parsePrimary() {
    const Token &t = peek();
    if (t.kind == Tok::kNumber) {
      auto e = std::make_shared<Expr>();
      e->span = t.span;
      e->number = std::strtof(next().text.c_str(), nullptr);
      return e;
    }
    if (accept("(")) {
      ExprPtr e = parseExpr();
      expect(")");
      return e;
    }
    if (t.kind != Tok::kIdent)
      throw ParseError(t.span, "expected expression, found " + describe(t));
    Token id = next();
    auto e = std::make_shared<Expr>();
    e->span = id.span;
    e->name = id.text;
    if (!accept("(")) {
      e->kind = ExprKind::kName;
      return e;
    }
    e->kind = ExprKind::kCall;
    e->args.push_back(parseExpr());
    if (accept(",")) {
      if (peek().kind == Tok::kIdent && peek().text == "axis") {
        next();
        expect("=");
        if (peek().kind != Tok::kNumber)
          throw ParseError(peek().span, "axis must be an integer");
        Token ax = next();
        if (ax.text.find_first_not_of("0123456789") != std::string::npos)
          throw ParseError(ax.span, "axis must be an integer");
        e->kind = ExprKind::kReduce;
        e->axis = std::atoi(ax.text.c_str());
        if (id.text != "sum" && id.text != "max")
          throw ParseError(id.span, "'" + id.text + "' is not a reduction");
        if (e->axis != 0)
          throw ParseError(ax.span,
                           "bad reduction axis " + ax.text + " for a 1-D row");
      } else {
        e->args.push_back(parseExpr());
      }
    }
    expect(")");
    checkCall(*e, id);
    return e;
  }

  void checkCall(const Expr &e, const Token &id) {
    if (e.kind == ExprKind::kReduce)
      return;
    if (id.text == "sum")
      throw ParseError(id.span, "sum requires axis=0");
    size_t want = id.text == "max" ? 2 : 1;
    if (!kUnaryFns.count(id.text) && id.text != "max" && id.text != "load")
      throw ParseError(id.span, "unknown function '" + id.text + "'");
    if (e.args.size() != want)
      throw ParseError(id.span, "'" + id.text + "' takes " +
                                    std::to_string(want) + " argument(s)");
    if (id.text == "load" && e.args[0]->kind != ExprKind::kName)
      throw ParseError(id.span, "load takes a parameter name");
  }

  std::vector<Token> toks_;
  size_t pos_ = 0;
};

/// Name resolution and store accounting.
void checkSemantics(const KernelAst &ast) {
  std::set<std::string> defined = {"NUM_COLS"};
  std::set<std::string> params, stored;
  for (const auto &p : ast.params) {
    if (kReserved.count(p.name))
      throw ParseError(p.span, "'" + p.name + "' is reserved");
    if (!params.insert(p.name).second)
      throw ParseError(p.span, "duplicate parameter '" + p.name + "'");
    if (p.kind != ParamKind::kOut)
      defined.insert(p.name);
  }

  std::function<void(const Expr &)> use = [&](const Expr &e) {
    if (e.kind == ExprKind::kName && !defined.count(e.name)) {
      const Param *p = ast.findParam(e.name);
      throw ParseError(e.span, p ? "output '" + e.name + "' cannot be read"
                                 : "undefined identifier '" + e.name + "'");
    }
    if (e.kind == ExprKind::kCall && e.name == "load") {
      const Param *p = ast.findParam(e.args[0]->name);
      if (!p || p->kind == ParamKind::kOut)
        throw ParseError(e.args[0]->span,
                         "load of non-input '" + e.args[0]->name + "'");
    }
    for (const auto &a : e.args)
      use(*a);
  };

  for (const auto &s : ast.stmts) {
    SourceSpan tspan = s.span;
    switch (s.kind) {
    case StmtKind::kConst:
    case StmtKind::kAssign:
      if (s.kind == StmtKind::kAssign)
        use(*s.value);
      if (kReserved.count(s.target) || defined.count(s.target) ||
          params.count(s.target))
        throw ParseError(tspan, "redefinition of '" + s.target + "'");
      defined.insert(s.target);
      break;
    case StmtKind::kStore: {
      use(*s.value);
      const Param *p = ast.findParam(s.target);
      if (!p || p->kind != ParamKind::kOut)
        throw ParseError(tspan, "store target '" + s.target +
                                    "' is not an output parameter");
      if (!stored.insert(s.target).second)
        throw ParseError(tspan, "duplicate store to '" + s.target + "'");
      break;
    }
    }
  }
  for (const auto &p : ast.params)
    if (p.kind == ParamKind::kOut && !stored.count(p.name))
      throw ParseError(p.span, "output '" + p.name + "' is never stored");
}

int precedence(ExprKind k) {
  switch (k) {
  case ExprKind::kAdd:
  case ExprKind::kSub:
    return 1;
  case ExprKind::kMul:
  case ExprKind::kDiv:
    return 2;
  case ExprKind::kNeg:
    return 3;
  default:
    return 4;
  }
}

std::string printExpr(const Expr &e) {
  auto child = [&](const Expr &c, bool right) {
    int pc = precedence(c.kind), pe = precedence(e.kind);
    bool paren = pc < pe || (right && pc == pe && pe < 3);
    std::string s = printExpr(c);
    return paren ? "(" + s + ")" : s;
  };
  switch (e.kind) {
  case ExprKind::kNumber:
    return formatFloat(e.number);
  case ExprKind::kName:
    return e.name;
  case ExprKind::kNeg:
    return "-" + child(*e.args[0], false);
  case ExprKind::kAdd:
  case ExprKind::kSub:
  case ExprKind::kMul:
  case ExprKind::kDiv: {
    const char *op = e.kind == ExprKind::kAdd   ? " + "
                     : e.kind == ExprKind::kSub ? " - "
                     : e.kind == ExprKind::kMul ? " * "
                                                : " / ";
    return child(*e.args[0], false) + op + child(*e.args[1], true);
  }
  case ExprKind::kCall: {
    std::string s = e.name + "(";
    for (size_t i = 0; i < e.args.size(); ++i)
      s += (i ? ", " : "") + printExpr(*e.args[i]);
    return s + ")";
  }
  case ExprKind::kReduce:
    return e.name + "(" + printExpr(*e.args[0]) +
           ", axis=" + std::to_string(e.axis) + ")";
  }
  return "";
}

bool exprEqual(const Expr &a, const Expr &b) {
  if (a.kind != b.kind || a.name != b.name || a.axis != b.axis ||
      a.args.size() != b.args.size())
    return false;
  if (a.kind == ExprKind::kNumber &&
      std::bit_cast<uint32_t>(a.number) != std::bit_cast<uint32_t>(b.number))
    return false;
  for (size_t i = 0; i < a.args.size(); ++i)
    if (!exprEqual(*a.args[i], *b.args[i]))
      return false;
  return true;
}

} // namespace

KernelAst parseKernel(const std::string &source) {
  KernelAst ast = Parser(Lexer(source).run()).run();
  checkSemantics(ast);
  return ast;
}

KernelAst parseKernelFile(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parseKernel(ss.str());
}

std::string printAst(const KernelAst &ast) {
  std::string s = "kernel " + ast.name + "(";
  for (size_t i = 0; i < ast.params.size(); ++i) {
    const Param &p = ast.params[i];
    s += (i ? ", " : "") + p.name + ": " +
         (p.kind == ParamKind::kIn    ? "in"
          : p.kind == ParamKind::kOut ? "out"
                                      : "col");
  }
  s += ") {\n";
  for (const Stmt &st : ast.stmts) {
    switch (st.kind) {
    case StmtKind::kConst:
      s += "  const " + st.target + " = " + formatFloat(st.value->number);
      break;
    case StmtKind::kAssign:
      s += "  " + st.target + " = " + printExpr(*st.value);
      break;
    case StmtKind::kStore:
      s += "  store(" + st.target + ", " + printExpr(*st.value) + ")";
      break;
    }
    s += ";\n";
  }
  return s + "}\n";
}

bool astEqual(const KernelAst &a, const KernelAst &b) {
  if (a.name != b.name || a.params.size() != b.params.size() ||
      a.stmts.size() != b.stmts.size())
    return false;
  for (size_t i = 0; i < a.params.size(); ++i)
    if (a.params[i].name != b.params[i].name ||
        a.params[i].kind != b.params[i].kind)
      return false;
  for (size_t i = 0; i < a.stmts.size(); ++i) {
    const Stmt &x = a.stmts[i], &y = b.stmts[i];
    if (x.kind != y.kind || x.target != y.target ||
        !exprEqual(*x.value, *y.value))
      return false;
  }
  return true;
}

} // namespace tcmc
