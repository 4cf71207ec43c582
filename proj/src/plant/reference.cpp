#include <cmath>
#include <numbers>

#include "dmrac/overloaded.hpp"
#include "dmrac/plant.hpp"

namespace dmrac::plant {

ReferenceSample reference_signal(const ReferenceSignal& sig, double t) {
  if (t < 0.0) throw Error(Errc::InvalidArgument, "reference_signal: t must be non-negative");
  ReferenceSample out{Vector::Zero(3), Vector::Zero(3)};
  Vector accel = Vector::Zero(3);
  std::visit(Overloaded{
                 [&](const Hover& h) { out.position(2) = h.height; },
                 [&](const Circle& c) {
                   const double w = 2.0 * std::numbers::pi / c.period;
                   out.position << c.radius * std::cos(w * t), c.radius * std::sin(w * t), c.height;
                   accel << -w * w * out.position(0), -w * w * out.position(1), 0.0;
                 },
                 [&](const FigureEight& f) {
                   // Lemniscate of Gerono: (s sin wt, s sin wt cos wt) = (s sin wt, s/2 sin 2wt).
                   const double w = 2.0 * std::numbers::pi / f.period;
                   const double s1 = std::sin(w * t);
                   const double s2 = std::sin(2.0 * w * t);
                   out.position << f.scale * s1, 0.5 * f.scale * s2, f.height;
                   accel << -f.scale * w * w * s1, -2.0 * f.scale * w * w * s2, 0.0;
                 },
                 [&](const Step& s) {
                   if (s.axis < 0 || s.axis > 2) throw Error(Errc::InvalidArgument, "Step: axis must be 0..2");
                   if (t >= s.time) out.command(s.axis) = s.level;
                 },
             },
             sig);
  if (!std::holds_alternative<Step>(sig)) {
    out.command(0) = -accel(1) / kGravity;
    out.command(1) = accel(0) / kGravity;
  }
  return out;
}

}  // namespace dmrac::plant
