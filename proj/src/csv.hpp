#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace cdm::csv {

using Row = std::vector<std::string>;

// RFC 4180 subset: comma separator, double-quote quoting with "" escapes,
// LF or CRLF line ends. Blank lines are skipped.
std::vector<Row> parse(std::string_view text);

std::string quote(std::string_view field);
std::string join(const Row& fields);

}  // namespace cdm::csv
