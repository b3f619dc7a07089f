#include "mdns/error.hpp"

namespace mdns {

void throw_config(const std::string& what) { throw Error(ErrorKind::Config, what); }
void throw_numeric(const std::string& what) { throw Error(ErrorKind::Numeric, what); }
void throw_cap(const std::string& what) { throw Error(ErrorKind::CapExceeded, what); }

}  // namespace mdns
