#include "xml_check.hpp"

#include <cctype>
#include <set>
#include <vector>

namespace xmlcheck {

namespace {

bool name_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == ':'; }
bool name_char(char c) {
  return name_start(c) || std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '.';
}
bool space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

class Parser {
 public:
  explicit Parser(const std::string& s) : s_(s) {}

  Result run() {
    Result r;
    try {
      skip_misc(true);
      if (at_end() || s_[pos_] != '<') fail("missing root element");
      r.root = element(r.elements);
      skip_misc(false);
      if (!at_end()) fail("content after the root element");
      r.ok = true;
    } catch (const std::string& e) {
      r.error = e;
    }
    return r;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { throw what + " at byte " + std::to_string(pos_); }
  bool at_end() const { return pos_ >= s_.size(); }
  bool starts(const char* lit) const { return s_.compare(pos_, std::char_traits<char>::length(lit), lit) == 0; }

  void skip_space() {
    while (!at_end() && space(s_[pos_])) ++pos_;
  }

  void skip_until(const char* end) {
    const auto p = s_.find(end, pos_);
    if (p == std::string::npos) fail(std::string("unterminated construct, expected '") + end + "'");
    pos_ = p + std::char_traits<char>::length(end);
  }

  void skip_misc(bool allow_declaration) {
    for (;;) {
      skip_space();
      if (starts("<?xml")) {
        if (!allow_declaration || pos_ != first_nonspace()) fail("misplaced XML declaration");
        skip_until("?>");
        allow_declaration = false;
      } else if (starts("<?")) {
        skip_until("?>");
      } else if (starts("<!--")) {
        comment();
      } else {
        return;
      }
    }
  }

  std::size_t first_nonspace() const {
    std::size_t p = 0;
    while (p < s_.size() && space(s_[p])) ++p;
    return p;
  }

  void comment() {
    pos_ += 4;
    const auto p = s_.find("--", pos_);
    if (p == std::string::npos) fail("unterminated comment");
    if (p + 2 >= s_.size() || s_[p + 2] != '>') fail("'--' inside comment");
    pos_ = p + 3;
  }

  std::string name() {
    if (at_end() || !name_start(s_[pos_])) fail("expected a name");
    const std::size_t b = pos_;
    while (!at_end() && name_char(s_[pos_])) ++pos_;
    return s_.substr(b, pos_ - b);
  }

  void entity() {
    const auto semi = s_.find(';', pos_);
    if (semi == std::string::npos || semi - pos_ > 12) fail("unterminated entity reference");
    const std::string ref = s_.substr(pos_ + 1, semi - pos_ - 1);
    static const std::set<std::string> named{"lt", "gt", "amp", "quot", "apos"};
    bool ok = named.count(ref) != 0;
    if (!ok && ref.size() > 1 && ref[0] == '#') {
      const bool hex = ref[1] == 'x';
      const std::string digits = ref.substr(hex ? 2 : 1);
      ok = !digits.empty();
      for (char c : digits) ok = ok && (hex ? std::isxdigit(static_cast<unsigned char>(c)) : std::isdigit(static_cast<unsigned char>(c)));
    }
    if (!ok) fail("unknown entity '&" + ref + ";'");
    pos_ = semi + 1;
  }

  void attribute_value() {
    if (at_end() || (s_[pos_] != '"' && s_[pos_] != '\'')) fail("attribute value must be quoted");
    const char quote = s_[pos_++];
    while (!at_end() && s_[pos_] != quote) {
      if (s_[pos_] == '<') fail("'<' inside attribute value");
      if (s_[pos_] == '&') {
        entity();
      } else {
        ++pos_;
      }
    }
    if (at_end()) fail("unterminated attribute value");
    ++pos_;
  }

  std::string element(int& count) {
    ++pos_;
    const std::string tag = name();
    ++count;
    std::set<std::string> attrs;
    for (;;) {
      const std::size_t before = pos_;
      skip_space();
      if (at_end()) fail("unterminated start tag <" + tag + ">");
      if (starts("/>")) {
        pos_ += 2;
        return tag;
      }
      if (s_[pos_] == '>') {
        ++pos_;
        break;
      }
      if (pos_ == before) fail("attributes must be separated by whitespace");
      const std::string attr = name();
      if (!attrs.insert(attr).second) fail("duplicate attribute '" + attr + "'");
      skip_space();
      if (at_end() || s_[pos_] != '=') fail("expected '=' after attribute '" + attr + "'");
      ++pos_;
      skip_space();
      attribute_value();
    }
    for (;;) {
      if (at_end()) fail("unclosed element <" + tag + ">");
      const char c = s_[pos_];
      if (c == '&') {
        entity();
      } else if (c == '>' && pos_ >= 2 && s_.compare(pos_ - 2, 2, "]]") == 0) {
        fail("']]>' in character data");
      } else if (c != '<') {
        ++pos_;
      } else if (starts("</")) {
        pos_ += 2;
        const std::string closing = name();
        if (closing != tag) fail("mismatched closing tag </" + closing + "> for <" + tag + ">");
        skip_space();
        if (at_end() || s_[pos_] != '>') fail("malformed closing tag");
        ++pos_;
        return tag;
      } else if (starts("<!--")) {
        comment();
      } else if (starts("<![CDATA[")) {
        skip_until("]]>");
      } else if (starts("<?")) {
        skip_until("?>");
      } else if (starts("<!")) {
        fail("declaration inside content");
      } else {
        element(count);
      }
    }
  }

  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace

Result check(const std::string& text) { return Parser(text).run(); }

int count_elements(const std::string& text, const std::string& name) {
  int n = 0;
  const std::string open = "<" + name;
  for (auto p = text.find(open); p != std::string::npos; p = text.find(open, p + 1)) {
    const std::size_t end = p + open.size();
    if (end < text.size() && !name_char(text[end])) ++n;
  }
  return n;
}

}  // namespace xmlcheck
