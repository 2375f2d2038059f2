#include "tse/scheduler.hpp"

#include <algorithm>
#include <cmath>

#include "tse/error.hpp"

namespace tse {

SchedulerState scheduler_step(SchedulerState state, double val_loss, int epoch,
                              const PlateauConfig& cfg) {
  require(std::isfinite(val_loss), Errc::kNonFinite, "validation loss is not finite");
  if (val_loss < state.best_val) {
    state.best_val = val_loss;
    state.epochs_since_improve = 0;
    return state;
  }
  ++state.epochs_since_improve;
  if (epoch > cfg.start_epoch && state.epochs_since_improve >= cfg.patience) {
    state.current_lr = std::max(state.current_lr * cfg.factor, cfg.lr_floor);
    state.epochs_since_improve = 0;
  }
  return state;
}

}  // namespace tse
