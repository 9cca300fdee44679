#include "facenet/image.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "facenet/errors.hpp"

namespace facenet {

namespace {

cv::Mat to_mat(const Image& image) {
  const int type = image.channels == 1 ? CV_8UC1 : CV_8UC3;
  cv::Mat m(image.height, image.width, type);
  std::copy(image.pixels.begin(), image.pixels.end(), m.data);
  if (image.channels == 3) cv::cvtColor(m, m, cv::COLOR_RGB2BGR);
  return m;
}

Image from_mat(const cv::Mat& src) {
  cv::Mat m;
  if (src.channels() == 3) {
    cv::cvtColor(src, m, cv::COLOR_BGR2RGB);
  } else {
    m = src;
  }
  if (!m.isContinuous()) m = m.clone();
  Image out(m.rows, m.cols, m.channels());
  std::copy(m.data, m.data + out.pixels.size(), out.pixels.begin());
  return out;
}

}  // namespace

Image read_image(const std::filesystem::path& path, int channels) {
  if (!std::filesystem::exists(path)) throw IngestionError("image not found: " + path.string());
  const int flag = channels == 1 ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR;
  cv::Mat m = cv::imread(path.string(), flag);
  if (m.empty()) throw IngestionError("cannot decode image: " + path.string());
  return from_mat(m);
}

void write_image(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw ValidationError("write_image: unsupported channel count");
  if (!cv::imwrite(path.string(), to_mat(image))) throw Error("cannot write image: " + path.string());
}

Image resize_bilinear(const Image& image, int height, int width) {
  if (image.height == height && image.width == width) return image;
  cv::Mat out;
  cv::resize(to_mat(image), out, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
  return from_mat(out);
}

Image flip_horizontal(const Image& image) {
  Image out(image.height, image.width, image.channels);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < image.channels; ++c) out.at(y, x, c) = image.at(y, image.width - 1 - x, c);
  return out;
}

}  // namespace facenet
