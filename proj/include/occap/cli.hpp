#pragma once

namespace occap::cli {

int run(int argc, const char* const* argv);

} // namespace occap::cli
