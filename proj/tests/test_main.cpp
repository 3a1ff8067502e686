#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <cstdlib>

#include <spdlog/spdlog.h>

int main(int argc, char** argv) {
  // Quiet by default; SITEOPS_TEST_LOG=info (etc.) to see the log.
  const char* level = std::getenv("SITEOPS_TEST_LOG");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::warn);
  doctest::Context ctx(argc, argv);
  return ctx.run();
}
