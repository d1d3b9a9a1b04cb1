#include "am/gcode.hpp"

#include <cctype>
#include <cmath>
#include <memory>
#include <sstream>

namespace am::gcode {

namespace {

bool is_number_start(char c) { return std::isdigit((unsigned char)c) || c == '+' || c == '-' || c == '.'; }

[[noreturn]] void lex_error(int line, int col, const std::string& what) {
    std::ostringstream os;
    os << "lex error at line " << line << ", column " << col << ": " << what;
    throw Error("gcode", os.str());
}

}  // namespace

std::vector<Token> tokenize(const std::string& source) {
    std::vector<Token> tokens;
    size_t i = 0;
    int line = 1, col = 1;
    const size_t n = source.size();

    auto advance = [&](size_t k) {
        for (size_t j = 0; j < k; ++j) {
            if (source[i + j] == '\n') { line++; col = 1; } else { col++; }
        }
        i += k;
    };

    while (i < n) {
        char c = source[i];
        if (c == '\n') {
            tokens.push_back({TokenKind::Newline, 0, 0, i, i + 1, line, col});
            advance(1);
            continue;
        }
        if (c == ' ' || c == '\t' || c == '\r') { advance(1); continue; }
        if (c == ';') {
            size_t end = source.find('\n', i);
            if (end == std::string::npos) end = n;
            tokens.push_back({TokenKind::Comment, 0, 0, i, end, line, col});
            advance(end - i);
            continue;
        }
        if (c == '(') {
            size_t end = source.find(')', i);
            if (end == std::string::npos) lex_error(line, col, "unterminated '(' comment");
            tokens.push_back({TokenKind::Comment, 0, 0, i, end + 1, line, col});
            advance(end + 1 - i);
            continue;
        }
        if (std::isalpha((unsigned char)c)) {
            tokens.push_back({TokenKind::WordLetter, char(std::toupper((unsigned char)c)),
                              0, i, i + 1, line, col});
            advance(1);
            continue;
        }
        if (is_number_start(c)) {
            size_t start = i;
            int start_line = line, start_col = col;
            size_t j = i;
            if (source[j] == '+' || source[j] == '-') j++;
            size_t digits = 0, dots = 0;
            while (j < n && (std::isdigit((unsigned char)source[j]) || source[j] == '.')) {
                if (source[j] == '.') {
                    dots++;
                    if (dots > 1) lex_error(start_line, start_col, "malformed number '" +
                                            source.substr(start, j + 1 - start) + "'");
                } else {
                    digits++;
                }
                j++;
            }
            if (digits == 0) lex_error(start_line, start_col, "malformed number");
            double value = std::strtod(source.substr(start, j - start).c_str(), nullptr);
            tokens.push_back({TokenKind::Number, 0, value, start, j, start_line, start_col});
            advance(j - i);
            continue;
        }
        if (c == '*') {
            // checksum field: skip to end of line
            size_t end = source.find('\n', i);
            if (end == std::string::npos) end = n;
            advance(end - i);
            continue;
        }
        lex_error(line, col, std::string("unexpected character '") + c + "'");
    }
    return tokens;
}

std::vector<Command> parse_program(const std::vector<Token>& tokens,
                                   const std::string& source) {
    (void)source;
    std::vector<Command> commands;
    size_t i = 0;
    const size_t n = tokens.size();

    while (i < n) {
        // collect one line of tokens
        std::vector<const Token*> words;
        int line_no = 0;
        while (i < n && tokens[i].kind != TokenKind::Newline) {
            if (tokens[i].kind != TokenKind::Comment) {
                words.push_back(&tokens[i]);
                line_no = tokens[i].line;
            }
            i++;
        }
        if (i < n) i++;  // consume newline
        if (words.empty()) continue;

        Command cmd;
        cmd.line_no = line_no;
        bool have_code = false;
        for (size_t w = 0; w < words.size(); ++w) {
            const Token* t = words[w];
            if (t->kind != TokenKind::WordLetter) {
                std::ostringstream os;
                os << "parse error at line " << t->line << ": number without a parameter letter";
                throw Error("gcode", os.str());
            }
            if (w + 1 >= words.size() || words[w + 1]->kind != TokenKind::Number) {
                std::ostringstream os;
                os << "parse error at line " << t->line << ": parameter word '" << t->letter
                   << "' has no number";
                throw Error("gcode", os.str());
            }
            double value = words[w + 1]->value;
            w++;  // consume the number

            if (!have_code) {
                have_code = true;
                cmd.raw_letter = t->letter;
                cmd.raw_number = value;
                int iv = int(std::lround(value));
                bool integral = std::abs(value - iv) < 1e-12;
                if (t->letter == 'G' && integral) {
                    switch (iv) {
                        case 0: cmd.code = Code::G0; break;
                        case 1: cmd.code = Code::G1; break;
                        case 2: cmd.code = Code::G2; break;
                        case 3: cmd.code = Code::G3; break;
                        case 90: cmd.code = Code::G90; break;
                        case 91: cmd.code = Code::G91; break;
                        case 92: cmd.code = Code::G92; break;
                        default: cmd.code = Code::Other; break;
                    }
                } else if (t->letter == 'M' && integral) {
                    switch (iv) {
                        case 82: cmd.code = Code::M82; break;
                        case 83: cmd.code = Code::M83; break;
                        default: cmd.code = Code::Other; break;
                    }
                } else {
                    cmd.code = Code::Other;
                }
            } else {
                cmd.params[t->letter] = value;  // duplicates: last value wins
            }
        }
        if (have_code) commands.push_back(std::move(cmd));
    }
    return commands;
}

std::vector<Command> parse_text(const std::string& source) {
    return parse_program(tokenize(source), source);
}

void DiwTriggerDetector::observe(const Command& cmd) {
    char letter = cmd.raw_letter;
    std::string code = std::string(1, letter) + format_gcode(cmd.raw_number);
    // compare as LETTER + integer when the number is integral
    if (std::abs(cmd.raw_number - std::lround(cmd.raw_number)) < 1e-12) {
        code = std::string(1, letter) + std::to_string((long)std::lround(cmd.raw_number));
    }
    if (code == on_) active_ = true;
    if (code == off_) active_ = false;
}

std::unique_ptr<ExtrusionDetector> make_detector(const std::string& spec) {
    if (spec == "fff-delta-e") return std::make_unique<FffDeltaEDetector>();
    if (spec.rfind("diw-trigger", 0) == 0) {
        std::string on = "M64", off = "M65";
        auto c1 = spec.find(':');
        if (c1 != std::string::npos) {
            auto c2 = spec.find(':', c1 + 1);
            if (c2 == std::string::npos)
                throw Error("gcode", "diw-trigger detector needs ON and OFF codes, e.g. diw-trigger:M64:M65");
            on = spec.substr(c1 + 1, c2 - c1 - 1);
            off = spec.substr(c2 + 1);
        }
        return std::make_unique<DiwTriggerDetector>(on, off);
    }
    throw Error("gcode", "unknown extrusion detector '" + spec +
                         "' (available: fff-delta-e, diw-trigger:<on>:<off>)");
}

ToolpathProgram extract_toolpath(const std::vector<Command>& commands,
                                 ExtrusionDetector& detector,
                                 double layer_height,
                                 double filament_diameter) {
    if (layer_height <= 0.0) throw Error("gcode", "layer_height must be positive");

    ToolpathProgram program;
    program.layer_height = layer_height;
    program.filament_diameter = filament_diameter;

    MachineState st;
    bool warned_default_positioning = false;

    for (const auto& cmd : commands) {
        detector.observe(cmd);
        switch (cmd.code) {
            case Code::G90:
                st.positioning = Positioning::Absolute;
                st.e_positioning = Positioning::Absolute;
                st.positioning_was_set = true;
                break;
            case Code::G91:
                st.positioning = Positioning::Relative;
                st.e_positioning = Positioning::Relative;
                st.positioning_was_set = true;
                break;
            case Code::M82:
                st.e_positioning = Positioning::Absolute;
                break;
            case Code::M83:
                st.e_positioning = Positioning::Relative;
                break;
            case Code::G92:
                // register reset, no motion
                if (cmd.has('X')) st.position.x = cmd.get('X', 0);
                if (cmd.has('Y')) st.position.y = cmd.get('Y', 0);
                if (cmd.has('Z')) st.position.z = cmd.get('Z', 0);
                if (cmd.has('E')) st.extruder = cmd.get('E', 0);
                break;
            case Code::G2:
            case Code::G3: {
                std::ostringstream os;
                os << "unsupported command " << code_name(cmd.code) << " (arc) at line "
                   << cmd.line_no;
                throw Error("gcode", os.str());
            }
            case Code::G0:
            case Code::G1: {
                if (!st.positioning_was_set && !warned_default_positioning) {
                    program.warnings.push_back(
                        "motion before any positioning mode was set; assuming absolute (G90)");
                    warned_default_positioning = true;
                }
                if (cmd.has('F')) st.feed = cmd.get('F', st.feed);

                Vec3 target = st.position;
                if (st.positioning == Positioning::Absolute) {
                    if (cmd.has('X')) target.x = cmd.get('X', target.x);
                    if (cmd.has('Y')) target.y = cmd.get('Y', target.y);
                    if (cmd.has('Z')) target.z = cmd.get('Z', target.z);
                } else {
                    target.x += cmd.get('X', 0.0);
                    target.y += cmd.get('Y', 0.0);
                    target.z += cmd.get('Z', 0.0);
                }
                double e_target = st.extruder;
                if (cmd.has('E')) {
                    if (st.e_positioning == Positioning::Absolute)
                        e_target = cmd.get('E', e_target);
                    else
                        e_target += cmd.get('E', 0.0);
                }
                double delta_e = e_target - st.extruder;

                Vec3 delta = target - st.position;
                if (norm2(delta) > 0.0) {
                    ToolpathSegment seg;
                    seg.start = st.position;
                    seg.end = target;
                    seg.delta_e = delta_e;
                    seg.feed = st.feed;
                    seg.line_no = cmd.line_no;
                    seg.extruding = detector.extruding(st, cmd, delta_e);
                    program.segments.push_back(seg);
                }
                st.position = target;
                st.extruder = e_target;
                break;
            }
            case Code::Other:
                break;
        }
    }

    // assign layer indices by z-quantization relative to the first extruding z
    double z_first = 0.0;
    bool have_first = false;
    for (const auto& s : program.segments) {
        if (s.extruding) { z_first = s.end.z; have_first = true; break; }
    }
    if (!have_first && !program.segments.empty()) z_first = program.segments.front().end.z;
    for (auto& s : program.segments) {
        s.layer_index = int(std::floor((s.end.z - z_first) / layer_height + 0.5));
        program.bounding_box.expand(s.start);
        program.bounding_box.expand(s.end);
    }
    return program;
}

std::string toolpath_report_csv(const std::vector<Command>& commands,
                                const ToolpathProgram& program) {
    (void)commands;
    std::ostringstream os;
    os << "line_no,command,extruding\n";
    for (const auto& s : program.segments) {
        os << s.line_no << ",G1," << (s.extruding ? 1 : 0) << "\n";
    }
    return os.str();
}

const char* code_name(Code code) {
    switch (code) {
        case Code::G0: return "G0";
        case Code::G1: return "G1";
        case Code::G2: return "G2";
        case Code::G3: return "G3";
        case Code::G90: return "G90";
        case Code::G91: return "G91";
        case Code::G92: return "G92";
        case Code::M82: return "M82";
        case Code::M83: return "M83";
        case Code::Other: return "other";
    }
    return "?";
}

}  // namespace am::gcode
