#pragma once

#include <functional>
#include <string_view>

namespace tomoforge {

using WarningSink = std::function<void(std::string_view)>;

/// Reports a recoverable problem. The default sink writes "warning: ..." to
/// stderr; tests install their own to capture messages.
void warn(std::string_view message);

/// Replaces the sink and returns the previous one. An empty sink restores the
/// default.
WarningSink set_warning_sink(WarningSink sink);

}  // namespace tomoforge
