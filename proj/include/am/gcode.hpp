#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "am/core.hpp"

namespace am::gcode {

enum class TokenKind { WordLetter, Number, Comment, Newline };

struct Token {
    TokenKind kind;
    char letter = 0;       // uppercase A-Z for WordLetter tokens
    double value = 0.0;    // for Number tokens
    size_t begin = 0;      // byte span into the source
    size_t end = 0;
    int line = 0;          // 1-based
    int column = 0;        // 1-based byte column

    std::string_view text(const std::string& source) const {
        return std::string_view(source).substr(begin, end - begin);
    }
};

enum class Code { G0, G1, G2, G3, G90, G91, G92, M82, M83, Other };

struct Command {
    Code code = Code::Other;
    char raw_letter = 0;    // original command word, kept for Other codes
    double raw_number = 0.0;
    std::map<char, double> params;
    int line_no = 0;

    bool has(char letter) const { return params.count(letter) > 0; }
    double get(char letter, double fallback) const {
        auto it = params.find(letter);
        return it == params.end() ? fallback : it->second;
    }
};

enum class Positioning { Absolute, Relative };

struct MachineState {
    Vec3 position{0, 0, 0};        // mm
    double extruder = 0.0;         // filament axis E, mm
    double feed = 0.0;             // mm/min
    Positioning positioning = Positioning::Absolute;
    Positioning e_positioning = Positioning::Absolute;
    bool positioning_was_set = false;
};

struct ToolpathSegment {
    Vec3 start;            // mm
    Vec3 end;              // mm
    bool extruding = false;
    double delta_e = 0.0;  // mm of filament
    double feed = 0.0;     // mm/min
    int layer_index = 0;
    int line_no = 0;
};

struct ToolpathProgram {
    std::vector<ToolpathSegment> segments;
    double filament_diameter = 0.41;  // mm
    double layer_height = 0.0;        // mm
    Aabb bounding_box;
    std::vector<std::string> warnings;

    size_t extruding_count() const {
        size_t n = 0;
        for (const auto& s : segments) n += s.extruding ? 1 : 0;
        return n;
    }
};

// Pluggable material-deposition test. Called per motion command with the
// state before the move and the resulting endpoint deltas.
class ExtrusionDetector {
public:
    virtual ~ExtrusionDetector() = default;
    // Called for every command so trigger-style detectors can track state.
    virtual void observe(const Command& cmd) { (void)cmd; }
    // Decides whether a motion command deposits material.
    virtual bool extruding(const MachineState& before, const Command& cmd,
                           double delta_e) const = 0;
    virtual std::string name() const = 0;
};

// FFF rule: a motion command deposits material iff its extruder delta is
// positive.
class FffDeltaEDetector final : public ExtrusionDetector {
public:
    bool extruding(const MachineState&, const Command&, double delta_e) const override {
        return delta_e > 0.0;
    }
    std::string name() const override { return "fff-delta-e"; }
};

// DIW rule: deposition is gated by explicit on/off marker commands (syringe
// pressure trigger). Marker codes are configurable, e.g. "M64"/"M65".
class DiwTriggerDetector final : public ExtrusionDetector {
public:
    DiwTriggerDetector(std::string on_code, std::string off_code)
        : on_(std::move(on_code)), off_(std::move(off_code)) {}
    void observe(const Command& cmd) override;
    bool extruding(const MachineState&, const Command&, double) const override {
        return active_;
    }
    std::string name() const override { return "diw-trigger"; }

private:
    std::string on_, off_;
    bool active_ = false;
};

// Builds a detector from a config name ("fff-delta-e" or
// "diw-trigger:M64:M65"). Unknown names raise an Error.
std::unique_ptr<ExtrusionDetector> make_detector(const std::string& spec);

std::vector<Token> tokenize(const std::string& source);
std::vector<Command> parse_program(const std::vector<Token>& tokens,
                                   const std::string& source);
// Convenience: tokenize + parse.
std::vector<Command> parse_text(const std::string& source);

ToolpathProgram extract_toolpath(const std::vector<Command>& commands,
                                 ExtrusionDetector& detector,
                                 double layer_height,
                                 double filament_diameter = 0.41);

// Diagnostic listing: line_no, command, extruding flag per segment.
std::string toolpath_report_csv(const std::vector<Command>& commands,
                                const ToolpathProgram& program);

const char* code_name(Code code);

}  // namespace am::gcode
