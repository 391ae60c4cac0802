#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <boost/multiprecision/cpp_int.hpp>

/// Final-answer extraction and rule-based equivalence checking.
///
/// Rule set applied by normalize(), repeated until nothing changes:
///   - trim surrounding whitespace
///   - strip enclosing `$…$`, `$$…$$`, `\(…\)`, `\[…\]` and `{…}`
///   - strip trailing periods
///   - drop `\left` / `\right`, spacing macros (`\,` `\;` `\!` `\ `) and
///     rewrite `\dfrac` / `\tfrac` as `\frac`, `{,}` as `,`
///   - unwrap `\text{…}`, `\textbf{…}`, `\mathrm{…}`, `\mbox{…}` and drop
///     degree marks `^\circ` / `^{\circ}`
///   - remove all whitespace
///   - drop a leading single-variable assignment such as `x=`
/// The result is then parsed as an exact rational when it is an integer
/// (optionally with 3-digit comma groups), a decimal, `\frac{p}{q}`,
/// `\frac pq` with single digits, or `p/q`, each with an optional sign.
/// Everything else stays case-preserved text.
namespace svs::verifier {

using Rational = boost::multiprecision::cpp_rational;

struct CanonicalAnswer {
  std::string raw;
  std::string normalized;
  std::optional<Rational> numeric;
};

/// Contents of the last balanced `\boxed{…}`.
std::optional<std::string> extract_boxed(std::string_view text);

CanonicalAnswer normalize(std::string_view answer);

/// Exact rational comparison when both sides are numeric, string equality
/// of the normalized forms otherwise.
bool answers_equal(std::string_view a, std::string_view b);

/// 1 iff a boxed answer exists and equals gold.
double correctness_reward(std::string_view rollout_text, std::string_view gold);

/// Shortest exact rendering: integer, decimal, or p/q (fraction on ties).
std::string render_rational(const Rational& value);

}  // namespace svs::verifier
