#include "svs/verifier.hpp"

#include <cctype>
#include <vector>

namespace svs::verifier {

namespace {

constexpr std::string_view kBoxed = "\\boxed";

bool is_space(char c) {
  return std::isspace(static_cast<unsigned char>(c)) != 0;
}
bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Index of the brace closing the one at `open`, or npos.
std::size_t matching_brace(std::string_view s, std::size_t open) {
  int depth = 0;
  for (std::size_t i = open; i < s.size(); ++i) {
    if (s[i] == '{') {
      ++depth;
    } else if (s[i] == '}') {
      if (--depth == 0) return i;
    }
  }
  return std::string_view::npos;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

bool strip_enclosing(std::string& s) {
  auto enclosed = [&](std::string_view open, std::string_view close) {
    return s.size() >= open.size() + close.size() &&
           s.compare(0, open.size(), open) == 0 &&
           s.compare(s.size() - close.size(), close.size(), close) == 0;
  };
  for (auto [open, close] :
       {std::pair<std::string_view, std::string_view>{"$$", "$$"},
        {"$", "$"},
        {"\\(", "\\)"},
        {"\\[", "\\]"}}) {
    if (enclosed(open, close)) {
      s = s.substr(open.size(), s.size() - open.size() - close.size());
      return true;
    }
  }
  if (s.size() >= 2 && s.front() == '{' && matching_brace(s, 0) == s.size() - 1) {
    s = s.substr(1, s.size() - 2);
    return true;
  }
  return false;
}

// ---- numeric parsing -------------------------------------------------------

bool all_digits(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!is_digit(c)) return false;
  }
  return true;
}

// Digits with optional 3-digit comma groups, e.g. "1,234,567".
std::optional<std::string> integer_digits(std::string_view s) {
  if (s.find(',') == std::string_view::npos) {
    if (!all_digits(s)) return std::nullopt;
    return std::string(s);
  }
  std::string out;
  std::size_t first = s.find(',');
  std::string_view head = s.substr(0, first);
  if (head.empty() || head.size() > 3 || !all_digits(head)) return std::nullopt;
  out += head;
  std::size_t pos = first;
  while (pos != std::string_view::npos) {
    std::string_view group = s.substr(pos + 1, 3);
    if (group.size() != 3 || !all_digits(group)) return std::nullopt;
    out += group;
    std::size_t next = pos + 4;
    if (next == s.size()) break;
    if (s[next] != ',') return std::nullopt;
    pos = next;
  }
  return out;
}

Rational pow10(std::size_t n) {
  boost::multiprecision::cpp_int p = 1;
  for (std::size_t i = 0; i < n; ++i) p *= 10;
  return Rational(p);
}

std::optional<Rational> parse_unsigned_decimal(std::string_view s) {
  if (s.empty()) return std::nullopt;
  std::size_t dot = s.find('.');
  std::string_view ip = dot == std::string_view::npos ? s : s.substr(0, dot);
  std::string_view fp =
      dot == std::string_view::npos ? std::string_view{} : s.substr(dot + 1);
  if (dot != std::string_view::npos && !all_digits(fp)) return std::nullopt;
  std::string digits;
  if (ip.empty()) {
    if (dot == std::string_view::npos) return std::nullopt;
  } else {
    auto d = integer_digits(ip);
    if (!d) return std::nullopt;
    digits = *d;
  }
  digits += fp;
  // cpp_int reads a leading 0 as an octal prefix.
  digits.erase(0, std::min(digits.find_first_not_of('0'), digits.size() - 1));
  boost::multiprecision::cpp_int num(digits);
  return Rational(num) / pow10(fp.size());
}

std::optional<Rational> parse_number(std::string_view s);

std::optional<Rational> parse_signed_decimal(std::string_view s) {
  bool neg = false;
  if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
    neg = s.front() == '-';
    s.remove_prefix(1);
  }
  auto v = parse_unsigned_decimal(s);
  if (!v) return std::nullopt;
  return neg ? Rational(-*v) : *v;
}

std::optional<Rational> parse_frac(std::string_view s) {
  constexpr std::string_view kFrac = "\\frac";
  if (s.substr(0, kFrac.size()) != kFrac) return std::nullopt;
  s.remove_prefix(kFrac.size());
  std::optional<Rational> num, den;
  if (s.size() == 2 && is_digit(s[0]) && is_digit(s[1])) {
    num = Rational(s[0] - '0');
    den = Rational(s[1] - '0');
  } else {
    if (s.empty() || s.front() != '{') return std::nullopt;
    std::size_t close1 = matching_brace(s, 0);
    if (close1 == std::string_view::npos || close1 + 1 >= s.size() ||
        s[close1 + 1] != '{') {
      return std::nullopt;
    }
    std::size_t close2 = matching_brace(s, close1 + 1);
    if (close2 != s.size() - 1) return std::nullopt;
    num = parse_number(s.substr(1, close1 - 1));
    den = parse_number(s.substr(close1 + 2, close2 - close1 - 2));
  }
  if (!num || !den || *den == 0) return std::nullopt;
  return *num / *den;
}

std::optional<Rational> parse_number(std::string_view s) {
  if (s.empty()) return std::nullopt;
  bool neg = false;
  std::string_view body = s;
  if (body.front() == '-' || body.front() == '+') {
    neg = body.front() == '-';
    body.remove_prefix(1);
  }
  if (auto f = parse_frac(body)) return neg ? Rational(-*f) : *f;
  std::size_t slash = s.find('/');
  if (slash != std::string_view::npos) {
    auto num = parse_signed_decimal(s.substr(0, slash));
    auto den = parse_signed_decimal(s.substr(slash + 1));
    if (!num || !den || *den == 0) return std::nullopt;
    return *num / *den;
  }
  return parse_signed_decimal(s);
}

// `\text{abc}` -> `abc` for the given macro, braces balanced.
void unwrap_macro(std::string& s, std::string_view macro) {
  std::size_t pos = 0;
  while ((pos = s.find(macro, pos)) != std::string::npos) {
    const std::size_t open = pos + macro.size();
    if (open >= s.size() || s[open] != '{') {
      pos = open;
      continue;
    }
    const std::size_t close = matching_brace(s, open);
    if (close == std::string::npos) return;
    s = s.substr(0, pos) + s.substr(open + 1, close - open - 1) + s.substr(close + 1);
  }
}

// One pass of the textual rules; returns true if anything changed.
bool normalize_pass(std::string& s) {
  const std::string before = s;
  s = std::string(trim(s));
  while (!s.empty() && (s.back() == '.' || is_space(s.back()))) s.pop_back();
  strip_enclosing(s);
  replace_all(s, "\\left", "");
  replace_all(s, "\\right", "");
  replace_all(s, "\\dfrac", "\\frac");
  replace_all(s, "\\tfrac", "\\frac");
  replace_all(s, "{,}", ",");
  for (std::string_view macro : {"\\text", "\\textbf", "\\mathrm", "\\mbox"}) {
    unwrap_macro(s, macro);
  }
  replace_all(s, "^{\\circ}", "");
  replace_all(s, "^\\circ", "");
  for (std::string_view spacing : {"\\,", "\\;", "\\!", "\\ "}) {
    replace_all(s, spacing, "");
  }
  std::string compact;
  compact.reserve(s.size());
  for (char c : s) {
    if (!is_space(c)) compact += c;
  }
  s = std::move(compact);
  if (s.size() > 2 && std::isalpha(static_cast<unsigned char>(s[0])) &&
      s[1] == '=') {
    s = s.substr(2);
  }
  return s != before;
}

}  // namespace

std::optional<std::string> extract_boxed(std::string_view text) {
  std::size_t search_end = text.size();
  while (true) {
    std::size_t pos = text.rfind(kBoxed, search_end);
    if (pos == std::string_view::npos) return std::nullopt;
    std::size_t open = pos + kBoxed.size();
    while (open < text.size() && text[open] == ' ') ++open;
    if (open < text.size() && text[open] == '{') {
      std::size_t close = matching_brace(text, open);
      if (close != std::string_view::npos) {
        return std::string(text.substr(open + 1, close - open - 1));
      }
    }
    if (pos == 0) return std::nullopt;
    search_end = pos - 1;
  }
}

std::string render_rational(const Rational& value) {
  using boost::multiprecision::cpp_int;
  const cpp_int num = boost::multiprecision::numerator(value);
  const cpp_int den = boost::multiprecision::denominator(value);
  if (den == 1) return num.str();
  std::string fraction = num.str() + "/" + den.str();

  cpp_int d = den;
  std::size_t twos = 0, fives = 0;
  while (d % 2 == 0) {
    d /= 2;
    ++twos;
  }
  while (d % 5 == 0) {
    d /= 5;
    ++fives;
  }
  if (d != 1) return fraction;
  const std::size_t places = std::max(twos, fives);
  cpp_int scaled = num;
  for (std::size_t i = 0; i < places; ++i) scaled *= 10;
  scaled /= den;
  const bool neg = scaled < 0;
  std::string digits = (neg ? cpp_int(-scaled) : scaled).str();
  if (digits.size() <= places) digits.insert(0, places - digits.size() + 1, '0');
  digits.insert(digits.size() - places, ".");
  std::string decimal = (neg ? "-" : "") + digits;
  return decimal.size() < fraction.size() ? decimal : fraction;
}

CanonicalAnswer normalize(std::string_view answer) {
  CanonicalAnswer out;
  out.raw = std::string(answer);
  std::string s(answer);
  // Each pass only shortens or rewrites; bounded to be safe on odd input.
  for (int i = 0; i < 64 && normalize_pass(s); ++i) {
  }
  if (auto v = parse_number(s)) {
    out.numeric = *v;
    out.normalized = render_rational(*v);
  } else {
    out.normalized = std::move(s);
  }
  return out;
}

bool answers_equal(std::string_view a, std::string_view b) {
  const CanonicalAnswer na = normalize(a);
  const CanonicalAnswer nb = normalize(b);
  if (na.numeric && nb.numeric) return *na.numeric == *nb.numeric;
  return na.normalized == nb.normalized;
}

double correctness_reward(std::string_view rollout_text, std::string_view gold) {
  auto boxed = extract_boxed(rollout_text);
  if (!boxed) return 0.0;
  return answers_equal(*boxed, gold) ? 1.0 : 0.0;
}

}  // namespace svs::verifier
