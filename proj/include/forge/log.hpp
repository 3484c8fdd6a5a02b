#pragma once

#include <functional>
#include <string_view>

namespace forge {

/// Non-fatal diagnostics. The default sink writes "warning: ..." to stderr.
void warn(std::string_view message);

using WarningSink = std::function<void(std::string_view)>;

/// Installs a sink and returns the previous one. An empty sink restores the
/// default.
WarningSink set_warning_sink(WarningSink sink);

}  // namespace forge
