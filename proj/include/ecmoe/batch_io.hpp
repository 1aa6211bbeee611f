#ifndef ECMOE_BATCH_IO_HPP
#define ECMOE_BATCH_IO_HPP

#include <string>

#include "ecmoe/matrix.hpp"

namespace ecmoe {

// .moeb batch file, little-endian:
//   magic "MOEB", u16 version=1, u32 n, u32 d, u8 has_ids,
//   n*d float32 row-major, then (if has_ids) n u32 token ids.
void write_moeb(const std::string& path, const TokenBatch& batch);
TokenBatch read_moeb(const std::string& path);

}  // namespace ecmoe

#endif
