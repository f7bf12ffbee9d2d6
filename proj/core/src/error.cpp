#include "latentce/error.hpp"

#include <utility>

namespace latentce {

CorruptCorpusError::CorruptCorpusError(long long id, const std::string& what)
    : Error("corrupt corpus (sample " + std::to_string(id) + "): " + what), id_(id) {}

OptimizerError::OptimizerError(std::string parameter, const std::string& what)
    : Error("optimizer: parameter '" + parameter + "': " + what), parameter_(std::move(parameter)) {}

TrainingError::TrainingError(long long step, const std::string& what)
    : Error("training aborted at step " + std::to_string(step) + ": " + what), step_(step) {}

}  // namespace latentce
