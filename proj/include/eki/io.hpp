#pragma once

#include <string>
#include <vector>

#include "eki/types.hpp"

namespace eki {

// Binary container: 8-byte magic "EKIMAT1\0", u64 rows, u64 cols
// (little-endian), then rows*cols f64 row-major little-endian.
void write_matrix_bin(const std::string& path, const Matrix& m);
Matrix read_matrix_bin(const std::string& path);

// CSV with %.17g formatting so every finite double round-trips bit-exactly.
void write_matrix_csv(const std::string& path, const Matrix& m,
                      const std::vector<std::string>& header = {});
Matrix read_matrix_csv(const std::string& path, bool skip_header = false);

std::string format_double(double v);

}  // namespace eki
