#include "mirenc/log.hpp"

#include <iostream>
#include <mutex>
#include <utility>

namespace mirenc {

namespace {

void default_sink(LogLevel level, std::string_view message)
{
    if (level == LogLevel::warning) std::cerr << "warning: " << message << '\n';
}

std::mutex& sink_mutex()
{
    static std::mutex m;
    return m;
}

LogSink& current_sink()
{
    static LogSink sink = default_sink;
    return sink;
}

void emit(LogLevel level, std::string_view message)
{
    std::lock_guard lock(sink_mutex());
    if (current_sink()) current_sink()(level, message);
}

} // namespace

LogSink set_log_sink(LogSink sink)
{
    std::lock_guard lock(sink_mutex());
    return std::exchange(current_sink(), std::move(sink));
}

void log_info(std::string_view message) { emit(LogLevel::info, message); }

void log_warning(std::string_view message) { emit(LogLevel::warning, message); }

} // namespace mirenc
