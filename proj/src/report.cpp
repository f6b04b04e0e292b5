#include "cosa/checkpoint.hpp"
#include "cosa/harness.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace cosa {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kAsrRule =
    "ASR is computed over the eligible set: inputs the evaluated model classifies correctly in clean form.";

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

void write_text(const fs::path& path, const std::string& text, std::vector<fs::path>& written) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
  written.push_back(path);
}

std::vector<TransferCell> read_cells(const fs::path& path) {
  const json j = read_json(path);
  std::vector<TransferCell> cells;
  for (const auto& c : j.at("cells")) cells.push_back(transfer_cell_from_json(c));
  return cells;
}

std::string cell_text(const TransferCell& c) {
  if (!c.error.empty()) return "FAIL";
  std::string s = fixed(c.asr, 1);
  return c.white_box ? "*" + s + "*" : s;
}

std::string cells_csv(const std::vector<TransferCell>& cells) {
  std::ostringstream os;
  os << "source,target,attack,eps,defense,seed,asr,samples,white_box,error\n";
  for (const auto& c : cells) {
    std::string err = c.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    os << c.source << ',' << c.target << ',' << c.attack << ',' << eps_tag(c.eps) << ',' << c.defense << ',' << c.seed
       << ',' << fixed(c.asr, 4) << ',' << c.samples << ',' << (c.white_box ? 1 : 0) << ',' << err << '\n';
  }
  return os.str();
}

// Source rows by target columns.
std::string cells_markdown(const std::string& title, const std::vector<TransferCell>& cells) {
  std::vector<std::string> sources, targets;
  for (const auto& c : cells) {
    if (std::find(sources.begin(), sources.end(), c.source) == sources.end()) sources.push_back(c.source);
    if (std::find(targets.begin(), targets.end(), c.target) == targets.end()) targets.push_back(c.target);
  }
  std::ostringstream os;
  os << "# " << title << "\n\n" << kAsrRule << " White-box cells are in italics.\n\n| source \\ target |";
  for (const auto& t : targets) os << ' ' << t << " |";
  os << "\n|---|";
  for (std::size_t i = 0; i < targets.size(); ++i) os << "---:|";
  os << '\n';
  for (const auto& s : sources) {
    os << "| " << s << " |";
    for (const auto& t : targets) {
      const auto it = std::find_if(cells.begin(), cells.end(), [&](const auto& c) { return c.source == s && c.target == t; });
      os << ' ' << (it == cells.end() ? std::string("-") : cell_text(*it)) << " |";
    }
    os << '\n';
  }
  os << "\nEligible-set sizes:\n\n";
  for (const auto& c : cells) os << "- " << c.source << " -> " << c.target << ": " << c.samples << "\n";
  return os.str();
}

// Grouped bar chart, one group per source and one bar per target.
std::string cells_svg(const std::string& title, const std::vector<TransferCell>& cells) {
  std::vector<std::string> sources, targets;
  for (const auto& c : cells) {
    if (std::find(sources.begin(), sources.end(), c.source) == sources.end()) sources.push_back(c.source);
    if (std::find(targets.begin(), targets.end(), c.target) == targets.end()) targets.push_back(c.target);
  }
  static const char* colors[] = {"#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948"};
  const int bar = 24, gap = 32, left = 50, top = 40, height = 200;
  const int group = static_cast<int>(targets.size()) * bar + gap;
  const int width = left + static_cast<int>(sources.size()) * group + 120;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << top + height + 40 << "\">\n";
  os << "<text x=\"" << left << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top + height << "\" x2=\"" << width - 110 << "\" y2=\"" << top + height
     << "\" stroke=\"black\"/>\n";
  for (int tick = 0; tick <= 100; tick += 25) {
    const int y = top + height - tick * height / 100;
    os << "<text x=\"" << left - 8 << "\" y=\"" << y + 4 << "\" font-family=\"sans-serif\" font-size=\"10\" "
       << "text-anchor=\"end\">" << tick << "</text>\n";
  }
  for (std::size_t s = 0; s < sources.size(); ++s) {
    const int x0 = left + static_cast<int>(s) * group + gap / 2;
    for (std::size_t t = 0; t < targets.size(); ++t) {
      const auto it = std::find_if(cells.begin(), cells.end(),
                                   [&](const auto& c) { return c.source == sources[s] && c.target == targets[t]; });
      if (it == cells.end() || !it->error.empty()) continue;
      const int h = static_cast<int>(it->asr * height / 100.0 + 0.5);
      os << "<rect x=\"" << x0 + static_cast<int>(t) * bar << "\" y=\"" << top + height - h << "\" width=\"" << bar - 2
         << "\" height=\"" << h << "\" fill=\"" << colors[t % 6] << "\"/>\n";
    }
    os << "<text x=\"" << x0 + static_cast<int>(targets.size()) * bar / 2 << "\" y=\"" << top + height + 16
       << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" << sources[s] << "</text>\n";
  }
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const int y = top + 10 + static_cast<int>(t) * 16;
    os << "<rect x=\"" << width - 100 << "\" y=\"" << y - 9 << "\" width=\"10\" height=\"10\" fill=\"" << colors[t % 6]
       << "\"/>\n<text x=\"" << width - 85 << "\" y=\"" << y << "\" font-family=\"sans-serif\" font-size=\"11\">"
       << targets[t] << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::vector<fs::path> record_dirs(const fs::path& root) {
  std::vector<fs::path> dirs;
  if (!fs::exists(root)) return dirs;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && e.path().filename() == "index.json") dirs.push_back(e.path().parent_path());
  }
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

}  // namespace

std::vector<fs::path> write_reports(const fs::path& out) {
  const fs::path dir = out / "reports";
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::vector<fs::path> written;

  const fs::path eval = out / "eval.json";
  if (fs::exists(eval)) {
    const auto cells = read_cells(eval);
    std::map<std::pair<std::string, std::string>, std::vector<TransferCell>> groups;  // (defense, eps) -> cells
    for (const auto& c : cells) groups[{c.defense, eps_tag(c.eps)}].push_back(c);
    for (const auto& [key, group] : groups) {
      const auto& [defense, eps] = key;
      const std::string stem = defense == "none" ? "transfer_eps" + eps : "defended_" + defense + "_eps" + eps;
      const std::string title = (defense == "none" ? "Transfer ASR (%)" : "Defended ASR (%), " + defense) +
                                ", attack " + group.front().attack + ", eps " + eps;
      write_text(dir / (stem + ".csv"), cells_csv(group), written);
      write_text(dir / (stem + ".md"), cells_markdown(title, group), written);
      write_text(dir / (stem + ".svg"), cells_svg(title, group), written);
    }
  }

  std::vector<AttackRecord> records;
  for (const auto& root : {out / "attacks", out / "ablation"}) {
    for (const auto& d : record_dirs(root)) {
      auto part = read_records(d);
      // Ablation runs of several seeds share a tag; keep them apart by seed directory.
      if (root.filename() == "ablation") {
        for (auto& r : part) r.attack = "ablation-" + r.attack;
      }
      records.insert(records.end(), part.begin(), part.end());
    }
  }
  if (!records.empty()) {
    const auto rows = imperceptibility_report(records);
    std::ostringstream csv, md;
    csv << "attack,cd,hd,l2,samples\n";
    md << "# Imperceptibility\n\nMeans over all successful attack runs (failed runs excluded).\n\n"
       << "| attack | CD | HD | l2 | samples |\n|---|---:|---:|---:|---:|\n";
    for (const auto& r : rows) {
      csv << r.attack << ',' << format_double(r.cd) << ',' << format_double(r.hd) << ',' << format_double(r.l2) << ','
          << r.samples << '\n';
      md << "| " << r.attack << " | " << fixed(r.cd, 6) << " | " << fixed(r.hd, 4) << " | " << fixed(r.l2, 4) << " | "
         << r.samples << " |\n";
    }
    write_text(dir / "imperceptibility.csv", csv.str(), written);
    write_text(dir / "imperceptibility.md", md.str(), written);
  }

  const fs::path ablation = out / "ablation" / "ablation.json";
  if (fs::exists(ablation)) {
    const auto cells = read_cells(ablation);
    write_text(dir / "ablation.csv", cells_csv(cells), written);
    // Mean over seeds for every (mode, defense, target).
    std::map<std::tuple<std::string, std::string, std::string>, std::pair<double, int>> mean;
    std::vector<std::string> modes, targets, defenses;
    for (const auto& c : cells) {
      if (!c.error.empty()) continue;
      auto& m = mean[{c.attack, c.defense, c.target}];
      m.first += c.asr;
      ++m.second;
      if (std::find(modes.begin(), modes.end(), c.attack) == modes.end()) modes.push_back(c.attack);
      if (std::find(targets.begin(), targets.end(), c.target) == targets.end()) targets.push_back(c.target);
      if (std::find(defenses.begin(), defenses.end(), c.defense) == defenses.end()) defenses.push_back(c.defense);
    }
    std::ostringstream md;
    md << "# Ablation\n\n" << kAsrRule << " Values are means over master seeds";
    if (!cells.empty()) md << "; source " << cells.front().source << ", eps " << eps_tag(cells.front().eps);
    md << ".\n";
    for (const auto& d : defenses) {
      md << "\n## defense: " << d << "\n\n| mode |";
      for (const auto& t : targets) md << ' ' << t << " |";
      md << "\n|---|";
      for (std::size_t i = 0; i < targets.size(); ++i) md << "---:|";
      md << '\n';
      for (const auto& m : modes) {
        md << "| " << m << " |";
        for (const auto& t : targets) {
          const auto it = mean.find({m, d, t});
          md << ' ' << (it == mean.end() ? std::string("-") : fixed(it->second.first / it->second.second, 1)) << " |";
        }
        md << '\n';
      }
    }
    write_text(dir / "ablation.md", md.str(), written);
  }
  return written;
}

}  // namespace cosa
