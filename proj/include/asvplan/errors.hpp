#pragma once
#include <stdexcept>
#include <string>

namespace asvplan {

// Coincident vessel positions make the LOS direction undefined; physical
// overlap must surface to the caller instead of reading as zero rotation.
struct ZeroLosVector : std::runtime_error {
  explicit ZeroLosVector(const std::string& what) : std::runtime_error(what) {}
};

struct EmptyWindow : std::runtime_error {
  explicit EmptyWindow(const std::string& what) : std::runtime_error(what) {}
};

struct DimensionMismatch : std::runtime_error {
  explicit DimensionMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct DivergedLoss : std::runtime_error {
  DivergedLoss(const std::string& what, int epoch_)
      : std::runtime_error(what), epoch(epoch_) {}
  int epoch;
};

struct InfeasibleConfig : std::runtime_error {
  explicit InfeasibleConfig(const std::string& what) : std::runtime_error(what) {}
};

struct VersionMismatch : std::runtime_error {
  explicit VersionMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct CorruptFile : std::runtime_error {
  explicit CorruptFile(const std::string& what) : std::runtime_error(what) {}
};

struct OutOfRange : std::runtime_error {
  explicit OutOfRange(const std::string& what) : std::runtime_error(what) {}
};

struct NoFeasibleAction : std::runtime_error {
  explicit NoFeasibleAction(const std::string& what) : std::runtime_error(what) {}
};

struct MalformedCsv : std::runtime_error {
  explicit MalformedCsv(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace asvplan
