#pragma once

#include <random>
#include <string>
#include <vector>

namespace plmgnn::testing {

/// Random but well-formed C functions: locals, loops, branches, calls to
/// undeclared library functions, struct fields, literals and comments.
class CFunctionGenerator {
 public:
  explicit CFunctionGenerator(std::uint64_t seed) : rng_(seed) {}

  std::string function(int index, int statements) {
    vars_.clear();
    std::string name = pick({"compute", "parse_header", "do_copy", "hash_block", "update", "scan"}) + "_" +
                       std::to_string(index);
    std::string params;
    const int np = uniform(1, 3);
    for (int i = 0; i < np; ++i) {
      auto v = fresh_var();
      params += (i ? ", " : "") + pick({"int ", "unsigned ", "char *", "const char *", "size_t "}) + v;
    }
    static const std::string local_type = "  typedef struct { int len; char *buf; } blk_t;\n  blk_t blk;\n";
    std::string body = uniform(0, 1) ? local_type : std::string();
    const int nl = uniform(1, 3);
    for (int i = 0; i < nl; ++i) {
      auto v = fresh_var();
      body += "  " + pick({"int ", "long ", "unsigned char ", "double "}) + v + " = " + literal() + ";\n";
    }
    for (int i = 0; i < statements; ++i) body += statement(2, 0);
    return "static int " + name + "(" + params + ")\n{\n" + body + "  return " + expr(0) + ";\n}\n";
  }

 private:
  std::mt19937_64 rng_;
  std::vector<std::string> vars_;

  int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  std::string pick(std::initializer_list<const char*> xs) {
    auto it = xs.begin();
    std::advance(it, uniform(0, static_cast<int>(xs.size()) - 1));
    return *it;
  }
  std::string fresh_var() {
    static const char* stems[] = {"len", "count", "idx", "buf", "ptr", "tmp", "res", "flag", "n", "off"};
    std::string v = std::string(stems[uniform(0, 9)]) + std::to_string(vars_.size());
    vars_.push_back(v);
    return v;
  }
  std::string var() { return vars_[uniform(0, static_cast<int>(vars_.size()) - 1)]; }
  std::string literal() {
    switch (uniform(0, 3)) {
      case 0: return std::to_string(uniform(0, 4096));
      case 1: return "0x" + std::to_string(uniform(10, 99));
      case 2: return "'" + std::string(1, static_cast<char>('a' + uniform(0, 25))) + "'";
      default: return std::to_string(uniform(1, 9)) + "U";
    }
  }
  std::string expr(int depth) {
    if (depth > 2 || uniform(0, 2) == 0) return uniform(0, 3) ? var() : literal();
    switch (uniform(0, 4)) {
      case 0: return "(" + expr(depth + 1) + pick({" + ", " - ", " * ", " & ", " | ", " ^ "}) + expr(depth + 1) + ")";
      case 1: return pick({"strlen", "abs", "foo_read", "ntohl"}) + std::string("(") + expr(depth + 1) + ")";
      case 2: return var() + "[" + expr(depth + 1) + "]";
      case 3: return "sizeof(" + var() + ")";
      default: return "!" + expr(depth + 1);
    }
  }
  std::string statement(int indent, int depth) {
    const std::string pad(static_cast<std::size_t>(indent), ' ');
    const int choice = depth > 2 ? uniform(0, 2) : uniform(0, 7);
    switch (choice) {
      case 0: return pad + var() + pick({" = ", " += ", " -= ", " <<= "}) + expr(0) + ";\n";
      case 1: return pad + pick({"memcpy", "printf", "log_msg"}) + "(\"" + pick({"%d\\n", "err: %s", "ok"}) + "\", " +
                     expr(0) + ");\n";
      case 2: return pad + var() + pick({"++", "--"}) + ";  /* step */\n";
      case 3: return pad + "if (" + expr(0) + " > " + literal() + ") {\n" + statement(indent + 2, depth + 1) + pad +
                     "} else {\n" + statement(indent + 2, depth + 1) + pad + "}\n";
      case 4: {
        auto i = fresh_var();
        return pad + "for (int " + i + " = 0; " + i + " < " + expr(1) + "; " + i + "++) {\n" +
               statement(indent + 2, depth + 1) + statement(indent + 2, depth + 1) + pad + "}\n";
      }
      case 5: return pad + "while (" + var() + " != 0) {\n" + statement(indent + 2, depth + 1) + pad + "  break;\n" +
                     pad + "}\n";
      case 6: return pad + "switch (" + var() + ") {\n" + pad + "case 1:\n" + statement(indent + 2, depth + 1) + pad +
                     "  break;\n" + pad + "default:\n" + pad + "  return -1;\n" + pad + "}\n";
      default: return pad + "// " + pick({"fast path", "TODO check bounds", "see header"}) + "\n" + pad + var() +
                      " = " + expr(0) + ";\n";
    }
  }
};

}  // namespace plmgnn::testing
